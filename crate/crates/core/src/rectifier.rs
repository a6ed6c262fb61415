//! Rectification by re-attack.
//!
//! The input is assumed to be an adversarial example. Its current prediction
//! is treated as the wrong label and the input is attacked again, untargeted,
//! until that prediction changes. Only [`Rectifiable`] is visible here, so no
//! ground-truth label can be consulted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::{deepfool_walk, Bounds, DEEPFOOL_OVERSHOOT};
use crate::error::{Error, Result};
use crate::oracle::Rectifiable;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ReattackMethod {
    Fgsm,
    Bim,
    DeepFool,
}

impl ReattackMethod {
    pub const ALL: [ReattackMethod; 3] = [ReattackMethod::Fgsm, ReattackMethod::Bim, ReattackMethod::DeepFool];

    pub fn name(self) -> &'static str {
        match self {
            ReattackMethod::Fgsm => "FGSM",
            ReattackMethod::Bim => "BIM",
            ReattackMethod::DeepFool => "DF",
        }
    }
}

impl fmt::Display for ReattackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReattackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "FGSM" => ReattackMethod::Fgsm,
            "BIM" => ReattackMethod::Bim,
            "DF" | "DEEPFOOL" => ReattackMethod::DeepFool,
            _ => return Err(Error::UnknownMethod(s.to_string())),
        })
    }
}

impl TryFrom<String> for ReattackMethod {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ReattackMethod> for String {
    fn from(m: ReattackMethod) -> String {
        m.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RectifyConfig {
    pub method: ReattackMethod,
    /// FGSM: final step size after all `steps`. BIM: L-inf radius.
    pub epsilon: f64,
    /// BIM step size.
    pub alpha: f64,
    /// FGSM line-search steps, BIM iterations, DeepFool iteration limit.
    pub steps: usize,
    pub bounds: Bounds,
    /// BIM only: run all `steps` iterations instead of stopping at the flip.
    #[serde(default)]
    pub full_iterations: bool,
    /// BIM only: search the radius (alpha scaled along) for the smallest
    /// one that flips; see [`reattack_bim`].
    #[serde(default)]
    pub epsilon_search: bool,
}

impl RectifyConfig {
    pub fn fgsm() -> Self {
        Self {
            method: ReattackMethod::Fgsm,
            epsilon: 1.0,
            alpha: 0.0,
            steps: 1000,
            bounds: Bounds::default(),
            full_iterations: false,
            epsilon_search: false,
        }
    }

    pub fn bim() -> Self {
        Self {
            method: ReattackMethod::Bim,
            epsilon: 0.3,
            alpha: 0.05,
            steps: 10,
            bounds: Bounds::default(),
            full_iterations: false,
            epsilon_search: false,
        }
    }

    pub fn deepfool() -> Self {
        Self {
            method: ReattackMethod::DeepFool,
            epsilon: 0.0,
            alpha: 0.0,
            steps: 100,
            bounds: Bounds::default(),
            full_iterations: false,
            epsilon_search: false,
        }
    }

    pub fn for_method(method: ReattackMethod) -> Self {
        match method {
            ReattackMethod::Fgsm => Self::fgsm(),
            ReattackMethod::Bim => Self::bim(),
            ReattackMethod::DeepFool => Self::deepfool(),
        }
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config(format!("{}: steps must be positive", self.method)));
        }
        if !(self.epsilon >= 0.0 && self.alpha >= 0.0 && self.epsilon.is_finite() && self.alpha.is_finite()) {
            return Err(Error::Config(format!("{}: epsilon and alpha must be finite and >= 0", self.method)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectifyOutcome {
    pub rectified: Tensor,
    /// `rectified - xa`.
    pub delta_prime: Tensor,
    /// Prediction on the input before re-attack.
    pub start_label: usize,
    pub new_label: usize,
    pub flipped: bool,
    pub iterations: usize,
}

impl RectifyOutcome {
    fn new(xa: &Tensor, rectified: Tensor, start_label: usize, new_label: usize, iterations: usize) -> Self {
        Self {
            delta_prime: rectified.sub(xa),
            rectified,
            start_label,
            new_label,
            flipped: new_label != start_label,
            iterations,
        }
    }
}

/// FGSM with a linear search over the step size: the loss gradient at `xa`
/// is taken once and `xa + (i * eps / s) * sign(g)` is tried for
/// `i = 1..=s` until the prediction changes.
pub fn reattack_fgsm<M: Rectifiable + ?Sized>(model: &M, xa: &Tensor, cfg: &RectifyConfig) -> Result<RectifyOutcome> {
    let ya = model.predict(xa)?;
    let dir = model.loss_input_grad(xa, ya)?.input_grad.sign();
    let eps_step = cfg.epsilon / cfg.steps as f64;
    let mut cur = xa.clone();
    let mut label = ya;
    for i in 1..=cfg.steps {
        cur = cfg.bounds.clip(&xa.add_scaled(&dir, eps_step * i as f64));
        label = model.predict(&cur)?;
        if label != ya {
            return Ok(RectifyOutcome::new(xa, cur, ya, label, i));
        }
    }
    Ok(RectifyOutcome::new(xa, cur, ya, label, cfg.steps))
}

/// BIM ascent on the loss of the current prediction, clipped to the
/// `epsilon` L-inf ball around `xa` and to the box.
///
/// With `epsilon_search` the radius grows by 1.5x from `epsilon` until a run
/// flips (at most 20 tries), then is bisected 10 times between 0 and the
/// first flipping radius, keeping `alpha / epsilon` fixed. The flipped
/// result with the smallest `||delta'||_2` is returned and `iterations`
/// counts gradient steps over all runs.
pub fn reattack_bim<M: Rectifiable + ?Sized>(model: &M, xa: &Tensor, cfg: &RectifyConfig) -> Result<RectifyOutcome> {
    let ya = model.predict(xa)?;
    if !cfg.epsilon_search || cfg.epsilon == 0.0 {
        let (cur, label, it) = bim_run(model, xa, ya, cfg.epsilon, cfg.alpha, cfg)?;
        return Ok(RectifyOutcome::new(xa, cur, ya, label, it));
    }
    use crate::attacks::{SEARCH_BISECT as BISECT, SEARCH_GROW as GROW};
    let ratio = cfg.alpha / cfg.epsilon;
    let mut total = 0;
    let mut best: Option<(f64, Tensor, usize)> = None;
    let mut attempt = |eps: f64, best: &mut Option<(f64, Tensor, usize)>| -> Result<(bool, Tensor, usize)> {
        let (cur, label, it) = bim_run(model, xa, ya, eps, ratio * eps, cfg)?;
        total += it;
        let flipped = label != ya;
        let norm = cur.sub(xa).l2_norm();
        if flipped && best.as_ref().is_none_or(|b| norm < b.0) {
            *best = Some((norm, cur.clone(), label));
        }
        Ok((flipped, cur, label))
    };
    let mut eps = cfg.epsilon;
    let mut last = None;
    for _ in 0..GROW {
        let (flipped, cur, label) = attempt(eps, &mut best)?;
        if flipped {
            break;
        }
        last = Some((cur, label));
        eps *= 1.5;
    }
    if best.is_none() {
        let (cur, label) = last.expect("at least one attempt");
        return Ok(RectifyOutcome::new(xa, cur, ya, label, total));
    }
    let (mut bad, mut good) = (0.0, eps);
    for _ in 0..BISECT {
        let mid = 0.5 * (bad + good);
        if attempt(mid, &mut best)?.0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let (_, cur, label) = best.expect("checked above");
    Ok(RectifyOutcome::new(xa, cur, ya, label, total))
}

fn bim_run<M: Rectifiable + ?Sized>(
    model: &M,
    xa: &Tensor,
    ya: usize,
    epsilon: f64,
    alpha: f64,
    cfg: &RectifyConfig,
) -> Result<(Tensor, usize, usize)> {
    let lo = xa.map(|v| (v - epsilon).max(cfg.bounds.low));
    let hi = xa.map(|v| (v + epsilon).min(cfg.bounds.high));
    let mut cur = xa.clone();
    let mut label = ya;
    for i in 1..=cfg.steps {
        let g = model.loss_input_grad(&cur, ya)?.input_grad;
        cur = crate::attacks::project(&cur.add_scaled(&g.sign(), alpha), &lo, &hi);
        label = model.predict(&cur)?;
        if label != ya && !cfg.full_iterations {
            return Ok((cur, label, i));
        }
    }
    Ok((cur, label, cfg.steps))
}

/// DeepFool away from the current prediction, at most `steps` iterations.
pub fn reattack_deepfool<M: Rectifiable + ?Sized>(
    model: &M,
    xa: &Tensor,
    cfg: &RectifyConfig,
) -> Result<RectifyOutcome> {
    let run = deepfool_walk(model, xa, cfg.steps, DEEPFOOL_OVERSHOOT, cfg.bounds)?;
    Ok(RectifyOutcome::new(xa, run.adv, run.start_label, run.label, run.iterations))
}

pub fn rectify<M: Rectifiable + ?Sized>(model: &M, xa: &Tensor, cfg: &RectifyConfig) -> Result<RectifyOutcome> {
    cfg.validate()?;
    match cfg.method {
        ReattackMethod::Fgsm => reattack_fgsm(model, xa, cfg),
        ReattackMethod::Bim => reattack_bim(model, xa, cfg),
        ReattackMethod::DeepFool => reattack_deepfool(model, xa, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::testing::{canonical, point};
    use crate::attacks::{fgsm, AttackConfig, AttackMethod};
    use crate::metrics::cosine_similarity;
    use crate::nn::Model;

    fn wide(cfg: RectifyConfig) -> RectifyConfig {
        cfg.with_bounds(Bounds::new(-1.0, 1.0))
    }

    #[test]
    fn table_defaults() {
        let f = RectifyConfig::fgsm();
        assert_eq!((f.steps, f.epsilon), (1000, 1.0));
        let b = RectifyConfig::bim();
        assert_eq!((b.epsilon, b.alpha, b.steps), (0.3, 0.05, 10));
        assert_eq!(RectifyConfig::deepfool().steps, 100);
    }

    #[test]
    fn fgsm_line_search_canonical() {
        let m = canonical();
        let xa = point(-0.25, 0.5);
        let mut cfg = wide(RectifyConfig::fgsm());
        cfg.steps = 10;
        // oracle: x0 = -0.25 + 0.1 i, first i with x0 > 0
        let i = (1..=10).find(|&i| -0.25 + 0.1 * i as f64 > 0.0).unwrap();
        assert_eq!(i, 3);
        let out = reattack_fgsm(&m, &xa, &cfg).unwrap();
        assert_eq!(out.start_label, 1);
        assert_eq!(out.iterations, 3);
        assert_eq!(out.new_label, 0);
        assert!(out.flipped);
        assert!((out.rectified.data()[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn fgsm_zero_gradient_exhausts_budget() {
        let m = Model::linear(&[vec![1.0, 1.0], vec![1.0, 1.0]], &[0.0, 0.0]).unwrap();
        let mut cfg = RectifyConfig::fgsm();
        cfg.steps = 7;
        let out = reattack_fgsm(&m, &point(0.3, 0.5), &cfg).unwrap();
        assert!(!out.flipped);
        assert_eq!(out.iterations, 7);
        assert_eq!(out.rectified, point(0.3, 0.5));
    }

    #[test]
    fn bim_canonical_stepwise() {
        let m = canonical();
        let xa = point(-0.25, 0.5);
        let mut x0 = -0.25f64;
        let mut expected = 0;
        for i in 1..=10 {
            x0 = (x0 + 0.05).min(-0.25 + 0.3);
            if x0 > -x0 {
                expected = i;
                break;
            }
        }
        assert_eq!(expected, 6);
        let out = reattack_bim(&m, &xa, &wide(RectifyConfig::bim())).unwrap();
        assert_eq!(out.iterations, 6);
        assert_eq!(out.new_label, 0);
        assert_eq!(out.rectified.data()[0], x0);
    }

    #[test]
    fn bim_small_ball_cannot_flip() {
        let m = canonical();
        let mut cfg = wide(RectifyConfig::bim());
        cfg.epsilon = 0.2;
        let out = reattack_bim(&m, &point(-0.25, 0.5), &cfg).unwrap();
        assert!(!out.flipped);
        assert!(out.delta_prime.linf_norm() <= 0.2 + 1e-12);
        assert_eq!(out.iterations, 10);
    }

    #[test]
    fn bim_full_iterations_keeps_going() {
        let m = canonical();
        let mut cfg = wide(RectifyConfig::bim());
        cfg.full_iterations = true;
        let out = reattack_bim(&m, &point(-0.25, 0.5), &cfg).unwrap();
        assert!(out.flipped);
        assert_eq!(out.iterations, 10);
        assert!((out.rectified.data()[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn bim_epsilon_search_shrinks_the_step() {
        let m = canonical();
        let mut cfg = wide(RectifyConfig::bim());
        cfg.epsilon_search = true;
        let out = reattack_bim(&m, &point(-0.25, 0.5), &cfg).unwrap();
        assert!(out.flipped);
        let plain = reattack_bim(&m, &point(-0.25, 0.5), &wide(RectifyConfig::bim())).unwrap();
        assert!(out.delta_prime.l2_norm() <= plain.delta_prime.l2_norm());
        // smallest flipping radius is 0.25; bisection resolves it to 0.3 / 2^10
        assert!(out.delta_prime.l2_norm() < 0.25 + 0.3 / 1024.0 + 1e-12);
        assert!(out.iterations > 6);
    }

    #[test]
    fn bim_epsilon_search_grows_when_needed() {
        let m = canonical();
        let mut cfg = wide(RectifyConfig::bim());
        cfg.epsilon = 0.1;
        cfg.alpha = 0.02;
        cfg.epsilon_search = true;
        let out = reattack_bim(&m, &point(-0.25, 0.5), &cfg).unwrap();
        assert!(out.flipped);
        assert_eq!(out.new_label, 0);
    }

    #[test]
    fn deepfool_single_step() {
        let m = canonical();
        let out = reattack_deepfool(&m, &point(-0.25, 0.5), &wide(RectifyConfig::deepfool())).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.new_label, 0);
        assert!((out.delta_prime.data()[0] - 0.25 * DEEPFOOL_OVERSHOOT).abs() < 1e-12);
    }

    #[test]
    fn dispatch_matches_direct_call() {
        let m = canonical();
        let xa = point(-0.25, 0.5);
        for method in ReattackMethod::ALL {
            let cfg = wide(RectifyConfig::for_method(method));
            let direct = match method {
                ReattackMethod::Fgsm => reattack_fgsm(&m, &xa, &cfg),
                ReattackMethod::Bim => reattack_bim(&m, &xa, &cfg),
                ReattackMethod::DeepFool => reattack_deepfool(&m, &xa, &cfg),
            };
            assert_eq!(rectify(&m, &xa, &cfg).unwrap(), direct.unwrap());
        }
    }

    #[test]
    fn benign_input_is_flipped_to_a_wrong_label() {
        let m = canonical();
        let out = rectify(&m, &point(0.3, 0.5), &wide(RectifyConfig::fgsm())).unwrap();
        assert!(out.flipped);
        assert_eq!(out.new_label, 1);
    }

    #[test]
    fn fgsm_reattack_reverses_fgsm_attack() {
        let m = canonical();
        let x = point(0.3, 0.5);
        let mut acfg = AttackConfig::new(AttackMethod::Fgsm, 2);
        acfg.epsilon = 0.4;
        acfg.bounds = Bounds::new(-1.0, 1.0);
        let ae = fgsm(&m, &x, 0, &acfg).unwrap();
        assert!(ae.success);
        let out = rectify(&m, &ae.adv, &wide(RectifyConfig::fgsm())).unwrap();
        assert!(out.flipped);
        assert_eq!(cosine_similarity(&ae.delta, &out.delta_prime).unwrap(), 1.0);
    }

    #[test]
    fn names_parse() {
        for m in ReattackMethod::ALL {
            assert_eq!(m.name().parse::<ReattackMethod>().unwrap(), m);
        }
        assert!("JSMA".parse::<ReattackMethod>().is_err());
    }
}
