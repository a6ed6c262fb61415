use super::detector::{detect_z, reattack_cost, CostCalibration, DetectorConfig};
use crate::error::Result;
use crate::oracle::WhiteBox;
use crate::rectifier::{rectify, RectifyConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defended {
    pub label: usize,
    pub detected: bool,
    pub cost: usize,
    pub z_score: f64,
}

/// Detector first; inputs it flags are rectified, the rest keep their
/// prediction.
pub fn defend<M: WhiteBox + ?Sized>(
    model: &M,
    x: &Tensor,
    calib: &CostCalibration,
    detector: &DetectorConfig,
    rectifier: &RectifyConfig,
) -> Result<Defended> {
    calib.check_compatible(detector)?;
    let cost = reattack_cost(model, x, &detector.attack)?;
    let verdict = detect_z(calib, cost, detector.z_threshold);
    let label = if verdict.is_ae { rectify(model, x, rectifier)?.new_label } else { model.predict(x)? };
    Ok(Defended { label, detected: verdict.is_ae, cost, z_score: verdict.z_score })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::testing::{canonical, point};
    use crate::attacks::{AttackMethod, Bounds};

    fn setup() -> (CostCalibration, DetectorConfig, RectifyConfig) {
        let mut det = DetectorConfig::new(AttackMethod::Bim, 2);
        det.attack.bounds = Bounds::new(-1.0, 1.0);
        det.attack.alpha = 0.02;
        let calib = CostCalibration::from_costs(AttackMethod::Bim, 50, vec![20, 30, 40], 5).unwrap();
        (calib, det, RectifyConfig::fgsm().with_bounds(Bounds::new(-1.0, 1.0)))
    }

    #[test]
    fn benign_passes_through() {
        let (calib, det, rect) = setup();
        let out = defend(&canonical(), &point(0.6, 0.5), &calib, &det, &rect).unwrap();
        assert!(!out.detected);
        assert_eq!(out.label, 0);
    }

    #[test]
    fn fragile_input_is_rectified() {
        let (calib, det, rect) = setup();
        let out = defend(&canonical(), &point(-0.01, 0.5), &calib, &det, &rect).unwrap();
        assert!(out.detected);
        assert_eq!(out.cost, 1);
        assert_eq!(out.label, 0);
    }

    #[test]
    fn mismatched_calibration_is_refused() {
        let (calib, mut det, rect) = setup();
        det.attack.method = AttackMethod::Jsma;
        assert!(defend(&canonical(), &point(0.6, 0.5), &calib, &det, &rect).is_err());
    }
}
