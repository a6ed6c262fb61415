//! Detector in front of the rectifier: inputs flagged as adversarial are
//! re-attacked, the rest keep their prediction.
//!
//!     cargo run --release --example defend_pipeline

use advrect::attacks::{run_for_sample, AttackConfig, AttackMethod};
use advrect::data::make_blobs;
use advrect::defense::{calibrate, defend, DetectorConfig};
use advrect::nn::{train_model, Model, TrainConfig};
use advrect::rectifier::RectifyConfig;
use advrect::Tensor;

fn main() -> advrect::Result<()> {
    let data = make_blobs(3, 6, 150, 6.0, 12)?;
    let (fit, rest) = (data.slice(0, 300), data.slice(300, data.len()));
    let mut model = Model::mlp(6, &[16], 3, 4)?;
    train_model(&mut model, &fit, None, &TrainConfig { epochs: 40, learning_rate: 0.01, ..TrainConfig::default() })?;

    let mut det = DetectorConfig::new(AttackMethod::Bim, 6);
    det.attack.alpha = 0.005;
    let benign: Vec<Tensor> = fit.inputs()[..60].to_vec();
    let calib = calibrate(&model, &benign, &det)?;
    let rect = RectifyConfig::fgsm();

    for attack in [AttackMethod::Fgsm, AttackMethod::DeepFool, AttackMethod::Cw] {
        let mut acfg = AttackConfig::new(attack, 6).with_seed(2);
        acfg.epsilon_steps = 100;
        let (mut n, mut detected, mut correct, mut benign_correct) = (0, 0, 0, 0);
        for (i, (x, y)) in rest.iter().enumerate() {
            let clean = defend(&model, x, &calib, &det, &rect)?;
            benign_correct += (clean.label == y) as usize;
            let ae = run_for_sample(&model, x, y, &acfg, i as u64, None)?;
            if !ae.success {
                continue;
            }
            let d = defend(&model, &ae.adv, &calib, &det, &rect)?;
            n += 1;
            detected += d.detected as usize;
            correct += (d.label == y) as usize;
        }
        println!(
            "{attack:<4} {n} AEs: detected {:.2}, defended accuracy {:.2}, benign accuracy {:.2}",
            detected as f64 / n as f64,
            correct as f64 / n as f64,
            benign_correct as f64 / rest.len() as f64
        );
    }
    Ok(())
}
