use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{self, AttackConfig, AttackMethod};
use crate::error::{Error, Result};
use crate::oracle::WhiteBox;
use crate::tensor::Tensor;

const MIN_CALIBRATION_SAMPLES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectorConfig {
    /// Cost attack; `max_iter` is the iteration budget.
    pub attack: AttackConfig,
    pub z_threshold: f64,
    pub knn_k: usize,
}

impl DetectorConfig {
    /// Budget 50, threshold 1.5, k = 5.
    pub fn new(method: AttackMethod, input_len: usize) -> Self {
        let mut attack = AttackConfig::new(method, input_len);
        attack.max_iter = 50;
        match method {
            AttackMethod::Bim => {
                attack.epsilon = 1.0;
                attack.alpha = 0.01;
            }
            AttackMethod::Jsma => attack.alpha = 0.2,
            // stop once the boundary is this close in L2
            AttackMethod::Hsja => attack.epsilon = 1.0,
            _ => {}
        }
        Self { attack, z_threshold: 1.5, knn_k: 5 }
    }

    pub fn budget(&self) -> usize {
        self.attack.max_iter
    }
}

/// Iterations the cost attack needs to change the current prediction of `x`,
/// or the budget when it never does.
///
/// BIM and JSMA count their own iterations. For HSJA the cost is the number
/// of boundary-walk iterations until the adversarial point is within
/// `epsilon` (L2) of `x`.
pub fn reattack_cost<M: WhiteBox + ?Sized>(model: &M, x: &Tensor, cfg: &AttackConfig) -> Result<usize> {
    let y = model.predict(x)?;
    let budget = cfg.max_iter;
    let mut cfg = cfg.clone();
    cfg.target = None;
    cfg.target_rank = None;
    let out = match cfg.method {
        AttackMethod::Bim => attacks::bim(model, x, y, &cfg)?,
        AttackMethod::Jsma => attacks::jsma(model, x, y, &cfg)?,
        AttackMethod::Hsja => {
            let mut walk = cfg.clone();
            walk.max_iter = budget;
            match crate::attacks::hsja_until(model, x, y, &walk, None, cfg.epsilon) {
                Ok(out) if out.delta.l2_norm() <= cfg.epsilon => return Ok(out.iterations.min(budget)),
                Ok(_) | Err(Error::InitFailure { .. }) => return Ok(budget),
                Err(e) => return Err(e),
            }
        }
        m => return Err(Error::Unsupported(format!("{m} as a cost attack"))),
    };
    Ok(if out.success { out.iterations } else { budget })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostCalibration {
    pub method: AttackMethod,
    pub budget: usize,
    pub benign_costs: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub knn_k: usize,
}

impl CostCalibration {
    pub fn from_costs(method: AttackMethod, budget: usize, benign_costs: Vec<usize>, knn_k: usize) -> Result<Self> {
        if benign_costs.is_empty() {
            return Err(Error::Calibration("no benign costs".into()));
        }
        if knn_k == 0 {
            return Err(Error::Calibration("knnK must be positive".into()));
        }
        let n = benign_costs.len() as f64;
        let mean = benign_costs.iter().map(|&c| c as f64).sum::<f64>() / n;
        let var = benign_costs.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std == 0.0 {
            return Err(Error::Calibration(format!("all {} benign costs equal {mean}", benign_costs.len())));
        }
        Ok(Self { method, budget, benign_costs, mean, std, knn_k })
    }

    pub fn z_score(&self, cost: usize) -> f64 {
        (cost as f64 - self.mean) / self.std
    }

    /// Header lines `# method M`, `# budget B`, `# knnK K`, then one cost per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# method {}\n# budget {}\n# knnK {}\n", self.method, self.budget, self.knn_k);
        for c in &self.benign_costs {
            let _ = writeln!(s, "{c}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("calibration file: {m}"));
        let (mut method, mut budget, mut knn_k) = (None, None, None);
        let mut costs = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(h) = line.strip_prefix('#') {
                let mut parts = h.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some("method"), Some(v)) => method = Some(v.parse::<AttackMethod>()?),
                    (Some("budget"), Some(v)) => budget = Some(v.parse().map_err(|_| bad(format!("budget `{v}`")))?),
                    (Some("knnK"), Some(v)) => knn_k = Some(v.parse().map_err(|_| bad(format!("knnK `{v}`")))?),
                    _ => {}
                }
            } else {
                costs.push(line.parse().map_err(|_| bad(format!("cost `{line}`")))?);
            }
        }
        let method = method.ok_or_else(|| bad("missing method header".into()))?;
        let budget = budget.ok_or_else(|| bad("missing budget header".into()))?;
        Self::from_costs(method, budget, costs, knn_k.unwrap_or(5))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Loads a calibration and checks it was made with the same cost attack
    /// and budget as `cfg`.
    pub fn load(path: impl AsRef<Path>, cfg: &DetectorConfig) -> Result<Self> {
        let calib = Self::from_text(&fs::read_to_string(path)?)?;
        calib.check_compatible(cfg)?;
        Ok(calib)
    }

    pub fn check_compatible(&self, cfg: &DetectorConfig) -> Result<()> {
        if self.method != cfg.attack.method || self.budget != cfg.budget() {
            return Err(Error::Calibration(format!(
                "calibrated with {} budget {}, detector uses {} budget {}",
                self.method,
                self.budget,
                cfg.attack.method,
                cfg.budget()
            )));
        }
        Ok(())
    }
}

/// Costs of known-benign samples under the detector's attack. Per-sample
/// seeds come from the sample position, so the result does not depend on
/// the thread count.
pub fn calibrate<M: WhiteBox + Sync + ?Sized>(
    model: &M,
    benign: &[Tensor],
    cfg: &DetectorConfig,
) -> Result<CostCalibration> {
    if benign.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::Calibration(format!(
            "need at least {MIN_CALIBRATION_SAMPLES} benign samples, got {}",
            benign.len()
        )));
    }
    let costs = costs_for(model, benign, &cfg.attack)?;
    CostCalibration::from_costs(cfg.attack.method, cfg.budget(), costs, cfg.knn_k)
}

/// `reattack_cost` over many samples, seeded by position.
pub(crate) fn costs_for<M: WhiteBox + Sync + ?Sized>(
    model: &M,
    xs: &[Tensor],
    cfg: &AttackConfig,
) -> Result<Vec<usize>> {
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| reattack_cost(model, x, &cfg.clone().with_seed(attacks::sample_seed(cfg.seed, i as u64))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionVerdict {
    pub is_ae: bool,
    pub cost: usize,
    pub z_score: f64,
}

/// Low cost means fragile: adversarial iff `z <= -threshold`.
pub fn detect_z(calib: &CostCalibration, cost: usize, z_threshold: f64) -> DetectionVerdict {
    let z_score = calib.z_score(cost);
    DetectionVerdict { is_ae: z_score <= -z_threshold, cost, z_score }
}

/// Majority vote among the `knn_k` labelled training costs nearest to
/// `cost`. Distance ties are broken by training order; a tied vote is benign.
pub fn detect_knn(calib: &CostCalibration, cost: usize, training: &[(usize, bool)]) -> Result<DetectionVerdict> {
    if training.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut by_dist: Vec<(usize, bool)> = training.iter().map(|&(c, ae)| (c.abs_diff(cost), ae)).collect();
    by_dist.sort_by_key(|&(d, _)| d);
    let k = calib.knn_k.min(by_dist.len());
    let votes = by_dist[..k].iter().filter(|(_, ae)| *ae).count();
    Ok(DetectionVerdict { is_ae: 2 * votes > k, cost, z_score: calib.z_score(cost) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::testing::{canonical, point};
    use crate::attacks::Bounds;

    fn calib(costs: &[usize], k: usize) -> CostCalibration {
        CostCalibration::from_costs(AttackMethod::Bim, 50, costs.to_vec(), k).unwrap()
    }

    #[test]
    fn population_statistics() {
        let c = calib(&[40, 50, 60], 1);
        assert_eq!(c.mean, 50.0);
        assert!((c.std - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn equal_costs_fail_calibration() {
        assert!(matches!(
            CostCalibration::from_costs(AttackMethod::Bim, 50, vec![7; 40], 5),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn z_verdicts() {
        let mut c = calib(&[40, 60], 1);
        assert_eq!(c.std, 10.0);
        let v = detect_z(&c, 3, 2.0);
        assert!((v.z_score + 4.7).abs() < 1e-12);
        assert!(v.is_ae);
        c.mean = 50.0;
        let v = detect_z(&c, 50, 2.0);
        assert_eq!(v.z_score, 0.0);
        assert!(!v.is_ae);
    }

    #[test]
    fn knn_verdicts() {
        let c = calib(&[40, 60], 1);
        let train = [(2, true), (45, false), (50, false)];
        assert!(detect_knn(&c, 4, &train).unwrap().is_ae);
        assert!(!detect_knn(&c, 40, &train).unwrap().is_ae);
        let benign_only = [(1, false), (2, false)];
        assert!(!detect_knn(&calib(&[1, 2], 3), 1, &benign_only).unwrap().is_ae);
        assert!(matches!(detect_knn(&c, 1, &[]), Err(Error::EmptyPool)));
    }

    fn bim_cfg(alpha: f64, budget: usize) -> AttackConfig {
        let mut a = AttackConfig::new(AttackMethod::Bim, 2);
        a.bounds = Bounds::new(-1.0, 1.0);
        a.alpha = alpha;
        a.epsilon = 1.0;
        a.max_iter = budget;
        a
    }

    #[test]
    fn cost_near_and_far_from_the_boundary() {
        let m = canonical();
        assert_eq!(reattack_cost(&m, &point(0.05, 0.5), &bim_cfg(0.1, 50)).unwrap(), 1);
        assert_eq!(reattack_cost(&m, &point(0.9, 0.5), &bim_cfg(0.01, 5)).unwrap(), 5);
    }

    #[test]
    fn calibration_text_round_trip_and_method_check() {
        let c = calib(&[3, 9, 27], 3);
        let back = CostCalibration::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.txt");
        c.save(&path).unwrap();
        let mut cfg = DetectorConfig::new(AttackMethod::Bim, 2);
        assert!(CostCalibration::load(&path, &cfg).is_ok());
        cfg.attack.method = AttackMethod::Jsma;
        assert!(matches!(CostCalibration::load(&path, &cfg), Err(Error::Calibration(_))));
    }

    #[test]
    fn calibration_needs_enough_samples() {
        let m = canonical();
        let xs = vec![point(0.5, 0.5); 10];
        let cfg = DetectorConfig::new(AttackMethod::Bim, 2);
        assert!(matches!(calibrate(&m, &xs, &cfg), Err(Error::Calibration(_))));
    }

    #[test]
    fn calibration_on_spread_samples() {
        let m = canonical();
        let xs: Vec<Tensor> = (0..40).map(|i| point(0.01 + 0.02 * i as f64, 0.5)).collect();
        let mut cfg = DetectorConfig::new(AttackMethod::Bim, 2);
        cfg.attack.bounds = Bounds::new(-1.0, 1.0);
        let c = calibrate(&m, &xs, &cfg).unwrap();
        assert_eq!(c.benign_costs.len(), 40);
        assert!(c.benign_costs.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.std > 0.0);
    }
}
