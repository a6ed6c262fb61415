use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{AttackConfig, AttackMethod};
use crate::defense::{DetectorConfig, RSV_DEFAULT_K};
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::rectifier::{ReattackMethod, RectifyConfig};

pub const CONFIG_VERSION: u32 = 1;

/// Re-attack radii of the FGSM robustness sweep.
pub const SWEEP_EPSILONS: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];

/// A whole experiment: data, victim, attack grid, rectifiers, detector,
/// baselines and sweep. Read from TOML; see `configs/` for examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub seed: u64,
    /// Adversarial examples per attack-grid cell.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub rectify: Vec<RectifySpec>,
    #[serde(default)]
    pub detector: Option<DetectorSpec>,
    #[serde(default)]
    pub baselines: Option<BaselineSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_pool_size() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// `train-images-idx3-ubyte[.gz]` etc. under `dir` (relative to the
    /// config file). With `ADVRECT_DATA` set, `$ADVRECT_DATA/<name>` is used.
    #[serde(rename_all = "camelCase")]
    Idx {
        name: String,
        dir: String,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    /// About a third of the samples, picked by a fixed hash of the index,
    /// form the test split.
    #[serde(rename_all = "camelCase")]
    Blobs { classes: usize, dim: usize, per_class: usize, separation: f64, seed: u64 },
    #[serde(rename_all = "camelCase")]
    Moons { n: usize, noise: f64, seed: u64 },
}

impl DatasetSpec {
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::Idx { name, .. } => name,
            DatasetSpec::Blobs { .. } => "blobs",
            DatasetSpec::Moons { .. } => "moons",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Two conv/pool blocks and a dense head; image inputs.
    Cnn,
    /// Dense relu network over flat inputs; no hidden layers is logistic
    /// regression.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelSpec {
    pub arch: Arch,
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Initialisation seed.
    pub seed: u64,
    /// Model file, relative to the output directory.
    #[serde(default = "default_model_file")]
    pub file: String,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_model_file() -> String {
    "model.bin".into()
}

/// One attack of the grid. Unset fields keep the per-method defaults of
/// [`AttackConfig::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AttackSpec {
    pub method: AttackMethod,
    #[serde(default = "yes")]
    pub untargeted: bool,
    /// Clean-logit ranks used as targets (2 = runner-up).
    #[serde(default)]
    pub target_ranks: Vec<usize>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub max_iter: Option<usize>,
    pub cw_const: Option<f64>,
    pub query_budget: Option<usize>,
    pub probes: Option<usize>,
    pub ls_candidates: Option<usize>,
    pub ls_pixels: Option<usize>,
    pub epsilon_steps: Option<usize>,
    pub epsilon_search: Option<bool>,
}

fn yes() -> bool {
    true
}

impl AttackSpec {
    pub fn new(method: AttackMethod) -> Self {
        Self {
            method,
            untargeted: true,
            target_ranks: Vec::new(),
            epsilon: None,
            alpha: None,
            max_iter: None,
            cw_const: None,
            query_budget: None,
            probes: None,
            ls_candidates: None,
            ls_pixels: None,
            epsilon_steps: None,
            epsilon_search: None,
        }
    }

    /// `None` first when untargeted, then the ranks in the given order.
    pub fn cells(&self) -> Vec<Option<usize>> {
        let mut v: Vec<_> = if self.untargeted { vec![None] } else { vec![] };
        v.extend(self.target_ranks.iter().map(|&r| Some(r)));
        v
    }

    pub fn config(&self, input_len: usize, seed: u64, rank: Option<usize>) -> AttackConfig {
        let mut c = AttackConfig::new(self.method, input_len).with_seed(seed);
        c.target_rank = rank;
        set(&mut c.epsilon, self.epsilon);
        set(&mut c.alpha, self.alpha);
        set(&mut c.max_iter, self.max_iter);
        set(&mut c.cw_const, self.cw_const);
        set(&mut c.query_budget, self.query_budget);
        set(&mut c.probes, self.probes);
        set(&mut c.ls_candidates, self.ls_candidates);
        set(&mut c.ls_pixels, self.ls_pixels);
        set(&mut c.epsilon_steps, self.epsilon_steps);
        set(&mut c.epsilon_search, self.epsilon_search);
        c
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// One re-attack of the rectify grid. Unset fields keep the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RectifySpec {
    pub method: ReattackMethod,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub steps: Option<usize>,
    pub full_iterations: Option<bool>,
    pub epsilon_search: Option<bool>,
}

impl RectifySpec {
    pub fn new(method: ReattackMethod) -> Self {
        Self { method, epsilon: None, alpha: None, steps: None, full_iterations: None, epsilon_search: None }
    }

    pub fn config(&self) -> RectifyConfig {
        let mut c = RectifyConfig::for_method(self.method);
        set(&mut c.epsilon, self.epsilon);
        set(&mut c.alpha, self.alpha);
        set(&mut c.steps, self.steps);
        set(&mut c.full_iterations, self.full_iterations);
        set(&mut c.epsilon_search, self.epsilon_search);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DetectorSpec {
    /// Cost attack.
    #[serde(default = "default_cost_method")]
    pub method: AttackMethod,
    pub budget: Option<usize>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub z_threshold: Option<f64>,
    pub knn_k: Option<usize>,
    /// Benign training samples for calibration.
    #[serde(default = "default_detector_size")]
    pub calibration_size: usize,
    /// Benign test samples, and adversarial examples per untargeted attack.
    #[serde(default = "default_detector_size")]
    pub eval_size: usize,
    /// Attack that labels the adversarial half of the k-NN training set; its
    /// settings come from the attack grid when it is listed there.
    #[serde(default = "default_cost_method")]
    pub knn_attack: AttackMethod,
    /// Rectifier behind the detector.
    #[serde(default = "default_pipeline_rectifier")]
    pub rectifier: RectifySpec,
}

fn default_cost_method() -> AttackMethod {
    AttackMethod::Bim
}

fn default_detector_size() -> usize {
    100
}

fn default_pipeline_rectifier() -> RectifySpec {
    RectifySpec::new(ReattackMethod::Fgsm)
}

impl DetectorSpec {
    pub fn config(&self, input_len: usize, seed: u64) -> DetectorConfig {
        let mut d = DetectorConfig::new(self.method, input_len);
        d.attack.seed = seed;
        set(&mut d.attack.max_iter, self.budget);
        set(&mut d.attack.epsilon, self.epsilon);
        set(&mut d.attack.alpha, self.alpha);
        set(&mut d.z_threshold, self.z_threshold);
        set(&mut d.knn_k, self.knn_k);
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BaselineSpec {
    /// Attacks whose untargeted pools are defended; empty means all.
    #[serde(default)]
    pub attacks: Vec<AttackMethod>,
    #[serde(default)]
    pub rsv_p: Vec<f64>,
    #[serde(default = "default_rsv_k")]
    pub rsv_k: usize,
    #[serde(default)]
    pub blur_sigma: Vec<f64>,
    #[serde(default)]
    pub pixel_fraction: Vec<f64>,
}

fn default_rsv_k() -> usize {
    RSV_DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep")]
    pub epsilons: Vec<f64>,
}

fn default_sweep() -> Vec<f64> {
    SWEEP_EPSILONS.to_vec()
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { epsilons: default_sweep() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the normalised TOML, hex encoded. Formatting and comments
    /// in the source file do not change it.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "configVersion {} is not supported (expected {CONFIG_VERSION})",
                self.config_version
            )));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("poolSize must be positive".into()));
        }
        let mut seen = Vec::new();
        for a in &self.attacks {
            if seen.contains(&a.method) {
                return Err(Error::Config(format!("attack {} listed twice", a.method)));
            }
            seen.push(a.method);
            if a.cells().is_empty() {
                return Err(Error::Config(format!("attack {} has no untargeted or targeted cell", a.method)));
            }
            if let Some(&r) = a.target_ranks.iter().find(|&&r| r < 2) {
                return Err(Error::Config(format!("attack {}: target rank {r} must be at least 2", a.method)));
            }
            for rank in a.cells() {
                a.config(1, self.seed, rank).validate()?;
            }
        }
        let mut seen = Vec::new();
        for r in &self.rectify {
            if seen.contains(&r.method) {
                return Err(Error::Config(format!("re-attack {} listed twice", r.method)));
            }
            seen.push(r.method);
            r.config().validate()?;
        }
        if let Some(d) = &self.detector {
            d.rectifier.config().validate()?;
            if d.eval_size == 0 {
                return Err(Error::Config("detector.evalSize must be positive".into()));
            }
        }
        if self.sweep.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("sweep epsilons must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn attack_spec(&self, method: AttackMethod) -> Option<&AttackSpec> {
        self.attacks.iter().find(|a| a.method == method)
    }

    /// The FGSM entry of the rectify grid, or the defaults.
    pub fn fgsm_rectifier(&self) -> RectifySpec {
        self.rectify
            .iter()
            .find(|r| r.method == ReattackMethod::Fgsm)
            .cloned()
            .unwrap_or_else(|| RectifySpec::new(ReattackMethod::Fgsm))
    }
}
