//! Adversarial example generation.
//!
//! Five white-box methods (FGSM, BIM, DeepFool, JSMA, CW) and two black-box
//! methods: a score-based greedy local search and a decision-based boundary
//! walk in the style of HopSkipJump. Black-box attacks are generic over
//! [`ScoreModel`] / [`Classifier`] only, so they cannot reach gradients.
//!
//! Every attack is a pure function of `(model, x, cfg)`; randomised attacks
//! draw from a generator seeded by `cfg.seed`.

mod cw;
mod deepfool;
mod fgsm;
mod hsja;
mod jsma;
mod local_search;

pub use cw::cw;
pub use deepfool::{deepfool, deepfool_step, deepfool_walk, DeepFoolRun, DEEPFOOL_OVERSHOOT};
pub use fgsm::{bim, fgsm};
pub(crate) use fgsm::{project, SEARCH_BISECT, SEARCH_GROW};
pub(crate) use hsja::hsja_until;
pub use hsja::{binary_search_boundary, hsja};
pub use jsma::jsma;
pub use local_search::local_search;

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{class_at_rank, Model};
use crate::oracle::ScoreModel;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AttackMethod {
    Fgsm,
    Bim,
    DeepFool,
    Jsma,
    Cw,
    LocalSearch,
    Hsja,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 7] = [
        AttackMethod::Fgsm,
        AttackMethod::Bim,
        AttackMethod::DeepFool,
        AttackMethod::Cw,
        AttackMethod::Jsma,
        AttackMethod::LocalSearch,
        AttackMethod::Hsja,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "FGSM",
            AttackMethod::Bim => "BIM",
            AttackMethod::DeepFool => "DF",
            AttackMethod::Jsma => "JSMA",
            AttackMethod::Cw => "CW",
            AttackMethod::LocalSearch => "LS",
            AttackMethod::Hsja => "HSJA",
        }
    }

    pub fn is_black_box(self) -> bool {
        matches!(self, AttackMethod::LocalSearch | AttackMethod::Hsja)
    }

    pub fn supports_targeted(self) -> bool {
        !matches!(self, AttackMethod::DeepFool | AttackMethod::LocalSearch)
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "FGSM" => AttackMethod::Fgsm,
            "BIM" => AttackMethod::Bim,
            "DF" | "DEEPFOOL" => AttackMethod::DeepFool,
            "JSMA" => AttackMethod::Jsma,
            "CW" => AttackMethod::Cw,
            "LS" | "LOCALSEARCH" => AttackMethod::LocalSearch,
            "HSJA" => AttackMethod::Hsja,
            _ => return Err(Error::UnknownMethod(s.to_string())),
        })
    }
}

impl TryFrom<String> for AttackMethod {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AttackMethod> for String {
    fn from(m: AttackMethod) -> String {
        m.name().to_string()
    }
}

/// Valid value range of every input element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self { low: 0.0, high: 1.0 }
    }
}

impl Bounds {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn clip(&self, x: &Tensor) -> Tensor {
        x.clip(self.low, self.high)
    }

    pub fn contains(&self, x: &Tensor) -> bool {
        x.data().iter().all(|v| (self.low..=self.high).contains(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// L-inf radius (FGSM, BIM); L2 stopping distance when HSJA is used as a cost attack.
    pub epsilon: f64,
    /// Step size (BIM, CW), pixel change (JSMA) or perturbation magnitude (LS).
    pub alpha: f64,
    pub max_iter: usize,
    pub target: Option<usize>,
    /// Resolved per sample to the class with this clean-logit rank.
    pub target_rank: Option<usize>,
    pub bounds: Bounds,
    pub seed: u64,
    pub cw_const: f64,
    pub query_budget: usize,
    /// DeepFool overshoot factor minus one.
    pub overshoot: f64,
    /// HSJA Monte Carlo probes per gradient-direction estimate.
    pub probes: usize,
    /// LS candidates per round.
    pub ls_candidates: usize,
    /// LS pixels perturbed per candidate.
    pub ls_pixels: usize,
    /// FGSM: when above 1, tries `epsilon * i / epsilon_steps` for
    /// `i = 1..=epsilon_steps` and keeps the first that succeeds.
    #[serde(default = "one")]
    pub epsilon_steps: usize,
    /// BIM: search the radius for the smallest successful one, keeping
    /// `alpha / epsilon` fixed; see [`bim`].
    #[serde(default)]
    pub epsilon_search: bool,
}

fn one() -> usize {
    1
}

impl AttackConfig {
    /// Per-method defaults for inputs of `input_len` elements in `[0, 1]`.
    pub fn new(method: AttackMethod, input_len: usize) -> Self {
        let mut cfg = Self {
            method,
            epsilon: 0.3,
            alpha: 0.03,
            max_iter: 20,
            target: None,
            target_rank: None,
            bounds: Bounds::default(),
            seed: 0,
            cw_const: 1.0,
            query_budget: 5000,
            overshoot: DEEPFOOL_OVERSHOOT - 1.0,
            probes: 32,
            ls_candidates: 3,
            ls_pixels: 50,
            epsilon_steps: 1,
            epsilon_search: false,
        };
        match method {
            AttackMethod::Fgsm => cfg.max_iter = 1,
            AttackMethod::Bim => {}
            AttackMethod::DeepFool => cfg.max_iter = 50,
            AttackMethod::Jsma => {
                cfg.alpha = 1.0;
                cfg.max_iter = (input_len / 10).max(1);
            }
            AttackMethod::Cw => {
                cfg.alpha = 0.01;
                cfg.max_iter = 200;
            }
            AttackMethod::LocalSearch => {
                cfg.alpha = 0.2;
                cfg.max_iter = usize::MAX;
            }
            AttackMethod::Hsja => cfg.max_iter = usize::MAX,
        }
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_target_rank(mut self, rank: usize) -> Self {
        self.target_rank = Some(rank);
        self
    }

    pub fn is_targeted(&self) -> bool {
        self.target.is_some() || self.target_rank.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.method)));
        if self.epsilon < 0.0 || self.alpha < 0.0 || !self.epsilon.is_finite() || !self.alpha.is_finite() {
            return bad("epsilon and alpha must be finite and >= 0".into());
        }
        if self.method == AttackMethod::Bim && self.alpha > self.epsilon {
            return bad(format!("alpha {} exceeds epsilon {}", self.alpha, self.epsilon));
        }
        if self.max_iter == 0 || self.epsilon_steps == 0 {
            return bad("maxIter and epsilonSteps must be positive".into());
        }
        if self.bounds.low > self.bounds.high {
            return bad("empty box".into());
        }
        if self.method == AttackMethod::Cw && self.cw_const < 0.0 {
            return bad("cwConst must be >= 0".into());
        }
        if self.is_targeted() && !self.method.supports_targeted() {
            return Err(Error::Unsupported(format!("targeted {}", self.method)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub adv: Tensor,
    /// `adv - x`.
    pub delta: Tensor,
    /// Label changed (untargeted) or reached the target (targeted).
    pub success: bool,
    pub iterations: usize,
    /// Model evaluations spent.
    pub queries: usize,
    pub orig_label: usize,
    pub adv_label: usize,
    pub target: Option<usize>,
}

impl AttackOutcome {
    pub(crate) fn new(
        x: &Tensor,
        adv: Tensor,
        orig_label: usize,
        adv_label: usize,
        target: Option<usize>,
        iterations: usize,
        queries: usize,
    ) -> Self {
        Self {
            delta: adv.sub(x),
            success: is_success(adv_label, orig_label, target),
            adv,
            iterations,
            queries,
            orig_label,
            adv_label,
            target,
        }
    }
}

pub(crate) fn is_success(label: usize, orig: usize, target: Option<usize>) -> bool {
    match target {
        Some(t) => label == t,
        None => label != orig,
    }
}

/// Class holding the `rank`-th largest clean logit (rank 1 is the prediction).
pub fn select_target_label<M: ScoreModel + ?Sized>(model: &M, x: &Tensor, rank: usize) -> Result<usize> {
    let logits = model.logits(x)?;
    class_at_rank(logits.data(), rank)
}

/// Mixes a base seed with a sample index.
pub fn sample_seed(seed: u64, sample: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(sample))
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs the configured attack. `hsja_start` seeds targeted HSJA.
pub fn run_attack(
    model: &Model,
    x: &Tensor,
    y: usize,
    cfg: &AttackConfig,
    hsja_start: Option<&Tensor>,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    model.check_input(x)?;
    match cfg.method {
        AttackMethod::Fgsm => fgsm(model, x, y, cfg),
        AttackMethod::Bim => bim(model, x, y, cfg),
        AttackMethod::DeepFool => deepfool(model, x, cfg),
        AttackMethod::Jsma => jsma(model, x, y, cfg),
        AttackMethod::Cw => cw(model, x, y, cfg),
        AttackMethod::LocalSearch => local_search(model, x, y, cfg),
        AttackMethod::Hsja => hsja(model, x, y, cfg, hsja_start),
    }
}

/// Attack for one pooled sample: derives the per-sample seed, resolves a
/// target rank to a class, and for targeted HSJA picks a random start among
/// `reference` samples the model assigns to the target class.
pub fn run_for_sample(
    model: &Model,
    x: &Tensor,
    y: usize,
    cfg: &AttackConfig,
    sample_id: u64,
    reference: Option<&Dataset>,
) -> Result<AttackOutcome> {
    let mut cfg = cfg.clone();
    cfg.seed = sample_seed(cfg.seed, sample_id);
    if let Some(rank) = cfg.target_rank {
        if rank < 2 {
            return Err(Error::RankOutOfRange { rank, num_classes: model.num_classes() });
        }
        cfg.target = Some(select_target_label(model, x, rank)?);
    }
    let start = match (cfg.method, cfg.target, reference) {
        (AttackMethod::Hsja, Some(t), Some(reference)) => targeted_start(model, t, reference, cfg.seed)?,
        _ => None,
    };
    run_attack(model, x, y, &cfg, start.as_ref())
}

fn targeted_start(model: &Model, target: usize, reference: &Dataset, seed: u64) -> Result<Option<Tensor>> {
    let mut rng = rng_for(seed ^ 0x5354_4152_5421);
    for i in index::sample(&mut rng, reference.len(), reference.len()).iter() {
        let (x, _) = reference.sample(i);
        if model.predict(x)? == target {
            return Ok(Some(x.clone()));
        }
    }
    Ok(None)
}

#[cfg(test)]
pub(crate) mod testing {
    use crate::nn::Model;
    use crate::tensor::Tensor;

    /// logits = (x0, -x0): class 0 iff x0 > 0, ties at x0 = 0 go to class 0.
    pub fn canonical() -> Model {
        Model::linear(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[0.0, 0.0]).unwrap()
    }

    pub fn point(a: f64, b: f64) -> Tensor {
        Tensor::from_vec(vec![a, b]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in AttackMethod::ALL {
            assert_eq!(m.name().parse::<AttackMethod>().unwrap(), m);
        }
        assert_eq!("deepfool".parse::<AttackMethod>().unwrap(), AttackMethod::DeepFool);
        assert!(matches!("PGD".parse::<AttackMethod>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn validation() {
        let mut cfg = AttackConfig::new(AttackMethod::Bim, 4);
        cfg.alpha = 0.5;
        assert!(cfg.validate().is_err());
        let cfg = AttackConfig::new(AttackMethod::LocalSearch, 4).with_target(1);
        assert!(matches!(cfg.validate(), Err(Error::Unsupported(_))));
        assert!(AttackConfig::new(AttackMethod::DeepFool, 4).with_target_rank(2).validate().is_err());
        assert!(AttackConfig::new(AttackMethod::Jsma, 784).validate().is_ok());
        assert_eq!(AttackConfig::new(AttackMethod::Jsma, 784).max_iter, 78);
    }

    #[test]
    fn target_label_by_rank() {
        let m = Model::linear(&[vec![5.0], vec![1.0], vec![3.0]], &[0.0; 3]).unwrap();
        let x = Tensor::from_vec(vec![1.0]).unwrap();
        assert_eq!(select_target_label(&m, &x, 2).unwrap(), 2);
        assert_eq!(select_target_label(&m, &x, 1).unwrap(), m.predict(&x).unwrap());
        assert!(select_target_label(&m, &x, 4).is_err());
    }

    #[test]
    fn sample_seeds_differ() {
        assert_ne!(sample_seed(1, 0), sample_seed(1, 1));
        assert_eq!(sample_seed(7, 3), sample_seed(7, 3));
    }
}
