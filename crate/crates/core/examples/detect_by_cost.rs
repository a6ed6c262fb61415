//! Calibrates the re-attack cost detector on benign inputs and shows how
//! far adversarial examples fall below the benign cost distribution.
//!
//!     cargo run --release --example detect_by_cost

use advrect::attacks::{run_for_sample, AttackConfig, AttackMethod};
use advrect::data::make_moons;
use advrect::defense::{calibrate, detect_z, mann_whitney_less, reattack_cost, DetectorConfig};
use advrect::nn::{train_model, Model, TrainConfig};
use advrect::Tensor;

fn main() -> advrect::Result<()> {
    let data = make_moons(600, 0.05, 4)?;
    let (fit, rest) = (data.slice(0, 400), data.slice(400, 600));
    let mut model = Model::mlp(2, &[32, 32], 2, 8)?;
    let cfg = TrainConfig { epochs: 150, learning_rate: 0.01, ..TrainConfig::default() };
    let report = train_model(&mut model, &fit, Some(&rest), &cfg)?;
    println!("moons test accuracy {:.3}", report.test_accuracy.unwrap_or(f64::NAN));

    let mut det = DetectorConfig::new(AttackMethod::Bim, 2);
    det.attack.alpha = 0.002;
    let benign: Vec<Tensor> = fit.inputs().iter().take(100).cloned().collect();
    let calib = calibrate(&model, &benign, &det)?;
    println!("benign cost mean {:.2}, std {:.2}, budget {}", calib.mean, calib.std, calib.budget);

    let acfg = AttackConfig::new(AttackMethod::DeepFool, 2);
    let mut benign_costs = Vec::new();
    let mut ae_costs = Vec::new();
    let (mut benign_ok, mut ae_ok) = (0, 0);
    for (i, (x, y)) in rest.iter().enumerate().take(100) {
        let c = reattack_cost(&model, x, &det.attack)?;
        benign_ok += !detect_z(&calib, c, det.z_threshold).is_ae as usize;
        benign_costs.push(c as f64);

        let ae = run_for_sample(&model, x, y, &acfg, i as u64, None)?;
        if ae.success {
            let c = reattack_cost(&model, &ae.adv, &det.attack)?;
            ae_ok += detect_z(&calib, c, det.z_threshold).is_ae as usize;
            ae_costs.push(c as f64);
        }
    }
    println!(
        "benign accuracy {:.2}, AE accuracy {:.2} over {} DF examples",
        benign_ok as f64 / benign_costs.len() as f64,
        ae_ok as f64 / ae_costs.len() as f64,
        ae_costs.len()
    );
    println!("Mann-Whitney p (AE costs lower) = {:.3e}", mann_whitney_less(&ae_costs, &benign_costs));
    Ok(())
}
