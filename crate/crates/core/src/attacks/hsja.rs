use rand::Rng;
use rand_distr::StandardNormal;

use super::{is_success, rng_for, AttackConfig, AttackOutcome, Bounds};
use crate::error::{Error, Result};
use crate::oracle::{Classifier, QueryCounter};
use crate::tensor::Tensor;

const BINARY_SEARCH_TOL: f64 = 1e-6;
const INIT_TRIES: usize = 100;
const MAX_STEP_HALVINGS: usize = 12;

struct Oracle<'a, M: ?Sized> {
    model: QueryCounter<'a, M>,
    y: usize,
    target: Option<usize>,
    budget: usize,
}

impl<M: Classifier + ?Sized> Oracle<'_, M> {
    /// `None` once the budget is spent.
    fn ask(&self, x: &Tensor) -> Result<Option<(bool, usize)>> {
        if self.model.queries() >= self.budget {
            return Ok(None);
        }
        let label = self.model.predict(x)?;
        Ok(Some((is_success(label, self.y, self.target), label)))
    }
}

/// Bisects the segment from `x` (not adversarial) to `adv` (adversarial)
/// until the bracket is shorter than 1e-6 in L2. Returns the point on the
/// adversarial side together with its label.
///
/// `is_adv` reports `None` when it can no longer answer, which ends the
/// search at the current bracket.
pub fn binary_search_boundary<F>(x: &Tensor, adv: &Tensor, adv_label: usize, mut is_adv: F) -> Result<(Tensor, usize)>
where
    F: FnMut(&Tensor) -> Result<Option<(bool, usize)>>,
{
    let dist = adv.sub(x).l2_norm();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut label = adv_label;
    let blend = |t: f64| x.zip_map(adv, |a, b| a + t * (b - a));
    while (hi - lo) * dist > BINARY_SEARCH_TOL {
        let mid = 0.5 * (lo + hi);
        match is_adv(&blend(mid))? {
            Some((true, l)) => {
                hi = mid;
                label = l;
            }
            Some((false, _)) => lo = mid,
            None => break,
        }
    }
    let point = if hi == 1.0 { adv.clone() } else { blend(hi) };
    Ok((point, label))
}

/// Decision-based boundary walk.
///
/// Starts from `start` (targeted) or from uniform noise in the box
/// (untargeted), projects onto the boundary by bisection, then repeats:
/// estimate the boundary normal from `probes` random sign queries at radius
/// `dist / d`, step along it by `dist / sqrt(t)` (halved until the point is
/// adversarial again), and bisect back toward `x`. The closest adversarial
/// point seen is returned. Every model call counts against `query_budget`.
pub fn hsja<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    y: usize,
    cfg: &AttackConfig,
    start: Option<&Tensor>,
) -> Result<AttackOutcome> {
    hsja_until(model, x, y, cfg, start, 0.0)
}

/// As [`hsja`], stopping as soon as the adversarial distance drops to
/// `stop_distance` or below.
pub(crate) fn hsja_until<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    y: usize,
    cfg: &AttackConfig,
    start: Option<&Tensor>,
    stop_distance: f64,
) -> Result<AttackOutcome> {
    let oracle = Oracle { model: QueryCounter::new(model), y, target: cfg.target, budget: cfg.query_budget };
    let mut rng = rng_for(cfg.seed);

    let Some((done, label)) = oracle.ask(x)? else {
        return Err(Error::InitFailure { queries: 0 });
    };
    if done {
        return Ok(AttackOutcome::new(x, x.clone(), y, label, cfg.target, 0, oracle.model.queries()));
    }

    let (start, start_label) = init_point(&oracle, x, start, cfg.bounds, &mut rng)?;
    let ask = |p: &Tensor| oracle.ask(p);
    let (mut best, mut best_label) = binary_search_boundary(x, &start, start_label, ask)?;
    let mut dist = best.sub(x).l2_norm();
    let d = x.len() as f64;
    let mut iterations = 0;
    let mut cur = best.clone();
    let mut cur_dist = dist;

    while iterations < cfg.max_iter && dist > stop_distance && oracle.model.queries() < cfg.query_budget {
        iterations += 1;
        let Some(dir) = estimate_direction(&oracle, &cur, cur_dist / d, cfg, &mut rng)? else {
            break;
        };
        let mut xi = cur_dist / (iterations as f64).sqrt();
        let mut moved = None;
        for _ in 0..MAX_STEP_HALVINGS {
            let cand = cfg.bounds.clip(&cur.add_scaled(&dir, xi));
            match oracle.ask(&cand)? {
                Some((true, l)) => {
                    moved = Some((cand, l));
                    break;
                }
                Some((false, _)) => xi *= 0.5,
                None => break,
            }
        }
        let Some((cand, cand_label)) = moved else {
            if oracle.model.queries() >= cfg.query_budget {
                break;
            }
            continue;
        };
        let (p, l) = binary_search_boundary(x, &cand, cand_label, ask)?;
        cur_dist = p.sub(x).l2_norm();
        cur = p;
        if cur_dist < dist {
            dist = cur_dist;
            best = cur.clone();
            best_label = l;
        }
    }
    Ok(AttackOutcome::new(x, best, y, best_label, cfg.target, iterations, oracle.model.queries()))
}

fn init_point<M: Classifier + ?Sized>(
    oracle: &Oracle<'_, M>,
    x: &Tensor,
    start: Option<&Tensor>,
    bounds: Bounds,
    rng: &mut impl Rng,
) -> Result<(Tensor, usize)> {
    let fail = || Error::InitFailure { queries: oracle.model.queries() };
    if let Some(s) = start {
        return match oracle.ask(s)? {
            Some((true, l)) => Ok((s.clone(), l)),
            _ => Err(fail()),
        };
    }
    for _ in 0..INIT_TRIES {
        let noise = x.with_data((0..x.len()).map(|_| rng.random_range(bounds.low..=bounds.high)).collect());
        match oracle.ask(&noise)? {
            Some((true, l)) => return Ok((noise, l)),
            Some((false, _)) => {}
            None => break,
        }
    }
    Err(fail())
}

// Unit vector pointing toward the adversarial side, or `None` when the
// budget runs out before any probe is answered.
fn estimate_direction<M: Classifier + ?Sized>(
    oracle: &Oracle<'_, M>,
    at: &Tensor,
    radius: f64,
    cfg: &AttackConfig,
    rng: &mut impl Rng,
) -> Result<Option<Tensor>> {
    let mut probes = Vec::with_capacity(cfg.probes);
    for _ in 0..cfg.probes.max(1) {
        let u = at.with_data((0..at.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let n = u.l2_norm();
        if n == 0.0 {
            continue;
        }
        let u = u.scale(1.0 / n);
        let Some((adv, _)) = oracle.ask(&cfg.bounds.clip(&at.add_scaled(&u, radius)))? else {
            break;
        };
        probes.push((if adv { 1.0 } else { -1.0 }, u));
    }
    if probes.is_empty() {
        return Ok(None);
    }
    let mean = probes.iter().map(|p| p.0).sum::<f64>() / probes.len() as f64;
    let centred = mean.abs() < 1.0;
    let mut sum = Tensor::zeros(at.shape().to_vec());
    for (phi, u) in &probes {
        let w = if centred { phi - mean } else { *phi };
        sum = sum.add_scaled(u, w);
    }
    let n = sum.l2_norm();
    Ok((n > 0.0).then(|| sum.scale(1.0 / n)))
}
