use rand::seq::index;
use rand::Rng;

use super::{rng_for, AttackConfig, AttackOutcome};
use crate::error::Result;
use crate::oracle::{QueryCounter, ScoreModel};
use crate::tensor::{argmax, softmax, Tensor};

/// Score-based greedy local search. Every round proposes `ls_candidates`
/// neighbours of the current point, each moving `ls_pixels` random pixels by
/// a random `+-alpha` (clipped to the box), and moves to the neighbour with
/// the lowest probability of `y` when it improves on the current point.
/// Stops on a label change, after `max_iter` rounds, or when the query
/// budget is spent.
pub fn local_search<M: ScoreModel + ?Sized>(
    model: &M,
    x: &Tensor,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    let oracle = QueryCounter::new(model);
    if cfg.query_budget == 0 {
        return Ok(AttackOutcome::new(x, x.clone(), y, y, None, 0, 0));
    }
    let mut rng = rng_for(cfg.seed);
    let mut cur = x.clone();
    let logits = oracle.logits(&cur)?;
    let mut label = argmax(logits.data());
    let mut score = softmax(logits.data())[y];
    let d = x.len();
    let pixels = cfg.ls_pixels.clamp(1, d);
    let mut rounds = 0;
    while label == y && rounds < cfg.max_iter {
        rounds += 1;
        let mut round_best: Option<(f64, Tensor, usize)> = None;
        for _ in 0..cfg.ls_candidates.max(1) {
            if oracle.queries() >= cfg.query_budget {
                break;
            }
            let mut data = cur.data().to_vec();
            for i in index::sample(&mut rng, d, pixels).iter() {
                let step = if rng.random_bool(0.5) { cfg.alpha } else { -cfg.alpha };
                data[i] = (data[i] + step).clamp(cfg.bounds.low, cfg.bounds.high);
            }
            let cand = Tensor::from_parts(x.shape().to_vec(), data);
            let z = oracle.logits(&cand)?;
            let p = softmax(z.data())[y];
            if round_best.as_ref().is_none_or(|b| p < b.0) {
                round_best = Some((p, cand, argmax(z.data())));
            }
        }
        match round_best {
            Some((p, cand, l)) if p < score || l != y => {
                score = p;
                cur = cand;
                label = l;
            }
            Some(_) => {}
            None => break,
        }
        if oracle.queries() >= cfg.query_budget {
            break;
        }
    }
    Ok(AttackOutcome::new(x, cur, y, label, None, rounds, oracle.queries()))
}
