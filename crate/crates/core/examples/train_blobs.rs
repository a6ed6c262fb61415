//! Trains a small dense network on separable blobs, saves it and checks
//! that the reloaded copy predicts identically.
//!
//!     cargo run --release --example train_blobs

use advrect::data::make_blobs;
use advrect::nn::{load_model, save_model, train_model, Model, TrainConfig};

fn main() -> advrect::Result<()> {
    let data = make_blobs(3, 4, 120, 6.0, 3)?;
    let train = data.slice(0, 270);
    let test = data.slice(270, data.len());

    let mut model = Model::mlp(4, &[16], 3, 1)?;
    let cfg = TrainConfig { epochs: 30, learning_rate: 0.01, ..TrainConfig::default() };
    let report = train_model(&mut model, &train, Some(&test), &cfg)?;
    for e in report.epochs.iter().step_by(10) {
        println!("epoch {:>2}  loss {:.4}  train acc {:.3}", e.epoch, e.mean_loss, e.train_accuracy);
    }
    println!("test accuracy {:.3}", report.test_accuracy.unwrap_or(f64::NAN));

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("blobs.model");
    save_model(&model, &path)?;
    let reloaded = load_model(&path)?;
    let same = test.iter().all(|(x, _)| model.predict(x).ok() == reloaded.predict(x).ok());
    println!("saved to {} ({} bytes), reload agrees: {same}", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
