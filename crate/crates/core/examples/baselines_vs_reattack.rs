//! Local-search adversarial examples against the input-transformation
//! baselines (noisy majority vote, Gaussian blur, random pixel replacement)
//! and against FGSM re-attack.
//!
//!     cargo run --release --example baselines_vs_reattack

use std::path::PathBuf;

use advrect::attacks::{run_for_sample, AttackConfig, AttackMethod, Bounds};
use advrect::data::{data_dir, load_idx};
use advrect::defense::{gaussian_blur, random_pixel_replacement, rsv_rectify, RSV_DEFAULT_K};
use advrect::nn::{train_model, Model, TrainConfig};
use advrect::rectifier::{rectify, RectifyConfig};

fn main() -> advrect::Result<()> {
    let dir = data_dir(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"));
    let train = load_idx(dir.join("train-images-idx3-ubyte.gz"), dir.join("train-labels-idx1-ubyte.gz"))?.head(1500);
    let test = load_idx(dir.join("t10k-images-idx3-ubyte.gz"), dir.join("t10k-labels-idx1-ubyte.gz"))?;
    let mut model = Model::small_cnn([1, 28, 28], 10, 5)?;
    train_model(&mut model, &train, None, &TrainConfig { epochs: 3, seed: 5, ..TrainConfig::default() })?;

    let acfg = AttackConfig::new(AttackMethod::LocalSearch, 784).with_seed(3);
    let mut pool = Vec::new();
    for (i, (x, y)) in test.iter().enumerate() {
        if pool.len() == 15 {
            break;
        }
        if model.predict(x)? == y {
            let out = run_for_sample(&model, x, y, &acfg, i as u64, None)?;
            if out.success {
                pool.push((y, out.adv));
            }
        }
    }
    let n = pool.len() as f64;
    let rate = |f: &dyn Fn(usize, &advrect::Tensor) -> advrect::Result<usize>| -> advrect::Result<f64> {
        let mut ok = 0;
        for (i, (y, adv)) in pool.iter().enumerate() {
            ok += (f(i, adv)? == *y) as usize;
        }
        Ok(ok as f64 / n)
    };

    println!("{} LS examples", pool.len());
    for p in [0.01, 0.1, 1.0, 10.0] {
        let s = rate(&|i, x| Ok(rsv_rectify(&model, x, p, RSV_DEFAULT_K, i as u64, Bounds::default())?.label))?;
        println!("RS&V p={p:<5} {s:.2}");
    }
    let blur = rate(&|_, x| model.predict(&gaussian_blur(x, 1.0)?))?;
    println!("blur sigma=1   {blur:.2}");
    let pixel = rate(&|i, x| model.predict(&random_pixel_replacement(x, 0.1, i as u64, Bounds::default())?))?;
    println!("pixels 10%     {pixel:.2}");
    let re = rate(&|_, x| Ok(rectify(&model, x, &RectifyConfig::fgsm())?.new_label))?;
    println!("FGSM re-attack {re:.2}");
    Ok(())
}
