use super::{AttackConfig, AttackOutcome, Bounds};
use crate::error::{Error, Result};
use crate::oracle::Rectifiable;
use crate::tensor::{argmax, Tensor};

/// Multiplicative overshoot applied to the accumulated perturbation.
pub const DEEPFOOL_OVERSHOOT: f64 = 1.02;

// Below this, a class-difference gradient is treated as vanishing.
const MIN_GRAD_NORM: f64 = 1e-12;
// Floor on the logit gap so a point lying exactly on a boundary still moves.
const MIN_GAP: f64 = 1e-12;

/// Minimal step from `x` onto the linearised boundary nearest to class `from`.
///
/// For every `k != from`: `w_k = grad f_k - grad f_from`, `f_k = f_k - f_from`.
/// Picks `l = argmin |f_k| / ||w_k||` and returns `|f_l| / ||w_l||^2 * w_l`.
pub fn deepfool_step<M: Rectifiable + ?Sized>(model: &M, x: &Tensor, from: usize) -> Result<Tensor> {
    let jac = model.logit_jacobian(x)?;
    step_from_jacobian(&jac.logits, &jac.rows, from)
}

fn step_from_jacobian(logits: &Tensor, rows: &[Tensor], from: usize) -> Result<Tensor> {
    let z = logits.data();
    let mut best: Option<(f64, Tensor, f64, f64)> = None;
    for k in (0..z.len()).filter(|&k| k != from) {
        let w = rows[k].sub(&rows[from]);
        let norm = w.l2_norm();
        if norm < MIN_GRAD_NORM {
            continue;
        }
        let gap = (z[k] - z[from]).abs();
        let dist = gap / norm;
        if best.as_ref().is_none_or(|b| dist < b.0) {
            best = Some((dist, w, gap, norm));
        }
    }
    let (_, w, gap, norm) = best.ok_or(Error::DegenerateGradient)?;
    Ok(w.scale(gap.max(MIN_GAP) / (norm * norm)))
}

#[derive(Debug, Clone)]
pub struct DeepFoolRun {
    pub adv: Tensor,
    pub start_label: usize,
    pub label: usize,
    pub iterations: usize,
    /// The first step `r_1`, before overshoot.
    pub first_step: Option<Tensor>,
}

/// DeepFool iterations from `start` until the predicted class leaves
/// `start`'s class or `max_iter` steps are taken. The accumulated
/// perturbation is scaled by `overshoot` and clipped to the box.
pub fn deepfool_walk<M: Rectifiable + ?Sized>(
    model: &M,
    start: &Tensor,
    max_iter: usize,
    overshoot: f64,
    bounds: Bounds,
) -> Result<DeepFoolRun> {
    let mut jac = model.logit_jacobian(start)?;
    let from = argmax(jac.logits.data());
    let mut total = Tensor::zeros(start.shape().to_vec());
    let mut cur = start.clone();
    let mut label = from;
    let mut first_step = None;
    let mut iterations = 0;
    while label == from && iterations < max_iter {
        let r = step_from_jacobian(&jac.logits, &jac.rows, from)?;
        total = total.add(&r);
        first_step.get_or_insert(r);
        cur = bounds.clip(&start.add_scaled(&total, overshoot));
        iterations += 1;
        jac = model.logit_jacobian(&cur)?;
        label = argmax(jac.logits.data());
    }
    Ok(DeepFoolRun { adv: cur, start_label: from, label, iterations, first_step })
}

/// Untargeted DeepFool from `x`, escaping the class the model assigns to `x`.
pub fn deepfool<M: Rectifiable + ?Sized>(model: &M, x: &Tensor, cfg: &AttackConfig) -> Result<AttackOutcome> {
    let run = deepfool_walk(model, x, cfg.max_iter, 1.0 + cfg.overshoot, cfg.bounds)?;
    Ok(AttackOutcome::new(x, run.adv, run.start_label, run.label, None, run.iterations, run.iterations + 1))
}
