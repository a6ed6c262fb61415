//! Attacks a small MNIST CNN, then recovers the original labels by attacking
//! the adversarial examples again. Neither the clean image nor its label is
//! given to the rectifier.
//!
//!     cargo run --release --example rectify_mnist

use std::path::PathBuf;

use advrect::attacks::{run_for_sample, AttackConfig, AttackMethod};
use advrect::data::{data_dir, load_idx};
use advrect::metrics::{cosine_similarity, rectification_success_rate};
use advrect::nn::{train_model, Model, TrainConfig};
use advrect::rectifier::{rectify, RectifyConfig};

fn main() -> advrect::Result<()> {
    let dir = data_dir(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"));
    let train = load_idx(dir.join("train-images-idx3-ubyte.gz"), dir.join("train-labels-idx1-ubyte.gz"))?.head(1500);
    let test = load_idx(dir.join("t10k-images-idx3-ubyte.gz"), dir.join("t10k-labels-idx1-ubyte.gz"))?;

    let mut model = Model::small_cnn([1, 28, 28], 10, 5)?;
    let cfg = TrainConfig { epochs: 3, seed: 5, ..TrainConfig::default() };
    let report = train_model(&mut model, &train, Some(&test), &cfg)?;
    println!("test accuracy {:.3}", report.test_accuracy.unwrap_or(f64::NAN));

    for attack in [AttackMethod::Fgsm, AttackMethod::DeepFool, AttackMethod::Cw] {
        let mut acfg = AttackConfig::new(attack, 784).with_seed(1);
        acfg.epsilon_steps = 100;
        let mut aes = Vec::new();
        for (i, (x, y)) in test.iter().enumerate() {
            if aes.len() == 20 {
                break;
            }
            if model.predict(x)? != y {
                continue;
            }
            let out = run_for_sample(&model, x, y, &acfg, i as u64, None)?;
            if out.success {
                aes.push((y, out));
            }
        }
        // BIM searches its radius; fixed 0.05 steps overshoot by far on MNIST
        let bim = RectifyConfig { epsilon_search: true, ..RectifyConfig::bim() };
        for rcfg in [RectifyConfig::fgsm(), bim, RectifyConfig::deepfool()] {
            let mut pairs = Vec::new();
            let mut cos = 0.0;
            let mut ratio = 0.0;
            for (y, ae) in &aes {
                let r = rectify(&model, &ae.adv, &rcfg)?;
                pairs.push((*y, r.new_label));
                cos += cosine_similarity(&ae.delta, &r.delta_prime)?;
                ratio += r.delta_prime.l2_norm() / ae.delta.l2_norm();
            }
            let n = aes.len() as f64;
            println!(
                "{attack:<4} -> {:<4} success {:.2}  mean |d'|/|d| {:.4}  mean cos {:.3}",
                rcfg.method.name(),
                rectification_success_rate(&pairs)?,
                ratio / n,
                cos / n
            );
        }
    }
    Ok(())
}
