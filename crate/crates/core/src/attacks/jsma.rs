use super::{is_success, AttackConfig, AttackOutcome, Bounds};
use crate::error::Result;
use crate::oracle::WhiteBox;
use crate::tensor::{argmax, Tensor};

/// Greedy single-pixel saliency attack. Each iteration moves the most salient
/// pixel by `alpha` (clipped to the box) and stops on success or after
/// `max_iter` pixels.
///
/// Untargeted saliency pairs the true class `y` with the current runner-up
/// `r`: pixel `i` qualifies when `df_y/dx_i` and `df_r/dx_i` have opposite
/// signs, scored by their product. Targeted saliency pairs the target with
/// the sum of all other logits. When no pixel qualifies, the pixel with the
/// steepest margin gradient is used instead.
pub fn jsma<M: WhiteBox + ?Sized>(model: &M, x: &Tensor, y: usize, cfg: &AttackConfig) -> Result<AttackOutcome> {
    let mut cur = x.clone();
    let mut jac = model.logit_jacobian(&cur)?;
    let mut label = argmax(jac.logits.data());
    let mut queries = 1;
    let mut iterations = 0;
    while !is_success(label, y, cfg.target) && iterations < cfg.max_iter {
        let (push, pull) = match cfg.target {
            Some(t) => {
                let mut rest = vec![0.0; cur.len()];
                for (_, row) in jac.rows.iter().enumerate().filter(|&(k, _)| k != t) {
                    rest.iter_mut().zip(row.data()).for_each(|(r, g)| *r += g);
                }
                (jac.rows[t].data().to_vec(), rest)
            }
            None => {
                let r = runner_up(jac.logits.data(), y);
                (jac.rows[r].data().to_vec(), jac.rows[y].data().to_vec())
            }
        };
        let Some((pixel, dir)) = pick_pixel(cur.data(), &push, &pull, cfg.bounds) else {
            break;
        };
        let mut data = cur.into_data();
        data[pixel] = (data[pixel] + dir * cfg.alpha).clamp(cfg.bounds.low, cfg.bounds.high);
        cur = Tensor::from_parts(x.shape().to_vec(), data);
        iterations += 1;
        jac = model.logit_jacobian(&cur)?;
        label = argmax(jac.logits.data());
        queries += 1;
    }
    Ok(AttackOutcome::new(x, cur, y, label, cfg.target, iterations, queries))
}

fn runner_up(logits: &[f64], y: usize) -> usize {
    let mut best = if y == 0 { 1 } else { 0 };
    for (k, &v) in logits.iter().enumerate() {
        if k != y && v > logits[best] {
            best = k;
        }
    }
    best
}

// `push` should rise, `pull` should fall. Returns (pixel, +1 or -1).
fn pick_pixel(x: &[f64], push: &[f64], pull: &[f64], bounds: Bounds) -> Option<(usize, f64)> {
    let movable = |i: usize, dir: f64| {
        if dir > 0.0 {
            x[i] < bounds.high
        } else if dir < 0.0 {
            x[i] > bounds.low
        } else {
            false
        }
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for i in 0..x.len() {
        let (a, b) = (push[i], pull[i]);
        if a * b >= 0.0 {
            continue;
        }
        let dir = a.signum();
        let score = -(a * b);
        if movable(i, dir) && best.is_none_or(|(s, _, _)| score > s) {
            best = Some((score, i, dir));
        }
    }
    if best.is_none() {
        for i in 0..x.len() {
            let m = push[i] - pull[i];
            let dir = crate::tensor::sign(m);
            if movable(i, dir) && best.is_none_or(|(s, _, _)| m.abs() > s) {
                best = Some((m.abs(), i, dir));
            }
        }
    }
    best.map(|(_, i, dir)| (i, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::testing::{canonical, point};
    use crate::attacks::AttackMethod;
    use crate::nn::Model;

    fn cfg(alpha: f64) -> AttackConfig {
        let mut c = AttackConfig::new(AttackMethod::Jsma, 2);
        c.bounds = Bounds::new(-1.0, 1.0);
        c.alpha = alpha;
        c.max_iter = 10;
        c
    }

    #[test]
    fn canonical_decreases_pixel_zero() {
        let m = canonical();
        let out = jsma(&m, &point(0.3, 0.5), 0, &cfg(0.2)).unwrap();
        assert!(out.success);
        // 0.3 -> 0.1 -> -0.1
        assert_eq!(out.iterations, 2);
        assert_eq!(out.adv.data()[1], 0.5);
        assert!(out.adv.data()[0] < 0.0);
    }

    #[test]
    fn saturated_input_cannot_move() {
        // leaving class 0 needs x0 to grow, but x0 already sits at the upper bound
        let m = Model::linear(&[vec![-1.0, 0.0], vec![1.0, 0.0]], &[2.0, 0.0]).unwrap();
        let c = cfg(0.5);
        let x = point(1.0, 1.0);
        assert_eq!(m.predict(&x).unwrap(), 0);
        let out = jsma(&m, &x, 0, &c).unwrap();
        assert!(!out.success);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.adv, x);
    }

    #[test]
    fn modified_pixels_within_budget() {
        let m = Model::mlp(16, &[8], 3, 5).unwrap();
        let x = Tensor::filled(vec![16], 0.5);
        let y = m.predict(&x).unwrap();
        let mut c = AttackConfig::new(AttackMethod::Jsma, 16);
        c.alpha = 0.05;
        let out = jsma(&m, &x, y, &c).unwrap();
        let changed = out.delta.data().iter().filter(|d| **d != 0.0).count();
        assert!(changed <= c.max_iter);
        assert!(out.iterations <= c.max_iter);
    }

    #[test]
    fn targeted_reaches_target() {
        let m = Model::linear(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]], &[0.0; 3]).unwrap();
        let x = point(0.8, 0.2);
        let c = cfg(0.3).with_target(2);
        let out = jsma(&m, &x, 0, &c).unwrap();
        assert!(out.success);
        assert_eq!(out.adv_label, 2);
    }
}
