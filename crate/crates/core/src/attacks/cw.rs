use super::{is_success, AttackConfig, AttackOutcome};
use crate::error::Result;
use crate::oracle::WhiteBox;
use crate::tensor::{argmax, Tensor};

/// Projected gradient descent on `||d||^2 + c * max(margin(x + d), 0)`.
///
/// Untargeted margin: `f_y - max_{k != y} f_k`. Targeted margin:
/// `max_{k != t} f_k - f_t`. Runs `max_iter` fixed steps of size `alpha` and
/// returns the successful point with the smallest `||d||_2`, or the last
/// iterate when none succeeded.
pub fn cw<M: WhiteBox + ?Sized>(model: &M, x: &Tensor, y: usize, cfg: &AttackConfig) -> Result<AttackOutcome> {
    let k = model.num_classes();
    let mut cur = x.clone();
    let mut best: Option<(f64, Tensor, usize)> = None;
    let mut label = y;
    let mut queries = 0;
    for it in 0..=cfg.max_iter {
        let logits = model.logits(&cur)?;
        queries += 1;
        let z = logits.data();
        label = argmax(z);
        let delta = cur.sub(x);
        let norm = delta.l2_norm();
        if is_success(label, y, cfg.target) && best.as_ref().is_none_or(|b| norm < b.0) {
            best = Some((norm, cur.clone(), label));
        }
        if it == cfg.max_iter {
            break;
        }
        let (up, down) = match cfg.target {
            Some(t) => (strongest_except(z, t), t),
            None => (y, strongest_except(z, y)),
        };
        let mut step = delta.scale(2.0);
        if z[up] - z[down] > 0.0 && cfg.cw_const > 0.0 {
            let mut w = vec![0.0; k];
            w[up] += cfg.cw_const;
            w[down] -= cfg.cw_const;
            let (_, g) = model.logit_vjp(&cur, &w)?;
            step = step.add(&g);
        }
        cur = cfg.bounds.clip(&cur.add_scaled(&step, -cfg.alpha));
    }
    let iterations = cfg.max_iter;
    Ok(match best {
        Some((_, adv, l)) => AttackOutcome::new(x, adv, y, l, cfg.target, iterations, queries),
        None => AttackOutcome::new(x, cur, y, label, cfg.target, iterations, queries),
    })
}

fn strongest_except(z: &[f64], skip: usize) -> usize {
    let mut best = if skip == 0 { 1 } else { 0 };
    for (k, &v) in z.iter().enumerate() {
        if k != skip && v > z[best] {
            best = k;
        }
    }
    best
}
