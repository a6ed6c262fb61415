use super::{is_success, AttackConfig, AttackOutcome};
use crate::error::Result;
use crate::oracle::WhiteBox;
use crate::tensor::Tensor;

/// Untargeted: `clip(x + eps * sign(grad L(x, y)))`.
/// Targeted: `clip(x - eps * sign(grad L(x, target)))`.
///
/// With `epsilon_steps > 1` the step size is searched linearly up to
/// `epsilon` (gradient taken once) and the first success is returned.
pub fn fgsm<M: WhiteBox + ?Sized>(model: &M, x: &Tensor, y: usize, cfg: &AttackConfig) -> Result<AttackOutcome> {
    let (class, dir) = match cfg.target {
        Some(t) => (t, -1.0),
        None => (y, 1.0),
    };
    let s = model.loss_input_grad(x, class)?.input_grad.sign();
    let steps = cfg.epsilon_steps.max(1);
    let mut adv = x.clone();
    let mut label = y;
    for i in 1..=steps {
        let eps = if steps == 1 { cfg.epsilon } else { cfg.epsilon * i as f64 / steps as f64 };
        adv = cfg.bounds.clip(&x.add_scaled(&s, dir * eps));
        label = model.predict(&adv)?;
        if is_success(label, y, cfg.target) {
            return Ok(AttackOutcome::new(x, adv, y, label, cfg.target, i, i + 1));
        }
    }
    Ok(AttackOutcome::new(x, adv, y, label, cfg.target, steps, steps + 1))
}

/// Iterated FGSM with step `alpha`, projected onto the L-inf ball of radius
/// `epsilon` around `x` and onto the box after every step. Stops on success.
///
/// With `epsilon_search` the radius grows by 1.5x from `epsilon` until a run
/// succeeds (at most 20 tries) and is then bisected 10 times below the first
/// successful radius, `alpha` scaled along. The success with the smallest
/// `||delta||_2` is returned; iterations and queries add up over all runs.
pub fn bim<M: WhiteBox + ?Sized>(model: &M, x: &Tensor, y: usize, cfg: &AttackConfig) -> Result<AttackOutcome> {
    if !cfg.epsilon_search || cfg.epsilon == 0.0 {
        let (cur, label, it) = bim_run(model, x, y, cfg.epsilon, cfg.alpha, cfg)?;
        return Ok(AttackOutcome::new(x, cur, y, label, cfg.target, it, 2 * it));
    }
    let ratio = cfg.alpha / cfg.epsilon;
    let mut total = 0;
    let mut best: Option<(f64, Tensor, usize)> = None;
    let mut attempt = |eps: f64, best: &mut Option<(f64, Tensor, usize)>| -> Result<(bool, Tensor, usize)> {
        let (cur, label, it) = bim_run(model, x, y, eps, ratio * eps, cfg)?;
        total += it;
        let ok = is_success(label, y, cfg.target);
        let norm = cur.sub(x).l2_norm();
        if ok && best.as_ref().is_none_or(|b| norm < b.0) {
            *best = Some((norm, cur.clone(), label));
        }
        Ok((ok, cur, label))
    };
    let mut eps = cfg.epsilon;
    let mut last = None;
    for _ in 0..SEARCH_GROW {
        let (ok, cur, label) = attempt(eps, &mut best)?;
        if ok {
            break;
        }
        last = Some((cur, label));
        eps *= 1.5;
    }
    if best.is_none() {
        let (cur, label) = last.expect("at least one attempt");
        return Ok(AttackOutcome::new(x, cur, y, label, cfg.target, total, 2 * total));
    }
    let (mut bad, mut good) = (0.0, eps);
    for _ in 0..SEARCH_BISECT {
        let mid = 0.5 * (bad + good);
        if attempt(mid, &mut best)?.0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let (_, cur, label) = best.expect("checked above");
    Ok(AttackOutcome::new(x, cur, y, label, cfg.target, total, 2 * total))
}

pub(crate) const SEARCH_GROW: usize = 20;
pub(crate) const SEARCH_BISECT: usize = 10;

// One BIM run at a fixed radius: (final point, its label, steps taken).
fn bim_run<M: WhiteBox + ?Sized>(
    model: &M,
    x: &Tensor,
    y: usize,
    epsilon: f64,
    alpha: f64,
    cfg: &AttackConfig,
) -> Result<(Tensor, usize, usize)> {
    let (class, dir) = match cfg.target {
        Some(t) => (t, -1.0),
        None => (y, 1.0),
    };
    let lo = x.map(|v| (v - epsilon).max(cfg.bounds.low));
    let hi = x.map(|v| (v + epsilon).min(cfg.bounds.high));
    let mut cur = x.clone();
    let mut label = y;
    for it in 1..=cfg.max_iter {
        let g = model.loss_input_grad(&cur, class)?.input_grad;
        cur = project(&cur.add_scaled(&g.sign(), dir * alpha), &lo, &hi);
        label = model.predict(&cur)?;
        if is_success(label, y, cfg.target) {
            return Ok((cur, label, it));
        }
    }
    Ok((cur, label, cfg.max_iter))
}

pub(crate) fn project(v: &Tensor, lo: &Tensor, hi: &Tensor) -> Tensor {
    let data = v.data().iter().zip(lo.data().iter().zip(hi.data())).map(|(&v, (&l, &h))| v.max(l).min(h)).collect();
    Tensor::from_parts(v.shape().to_vec(), data)
}
