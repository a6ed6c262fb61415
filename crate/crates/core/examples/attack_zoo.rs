//! Runs every attack against one victim and prints what each one costs.
//!
//!     cargo run --release --example attack_zoo

use advrect::attacks::{run_for_sample, AttackConfig, AttackMethod};
use advrect::data::make_blobs;
use advrect::nn::{train_model, Model, TrainConfig};

fn main() -> advrect::Result<()> {
    let data = make_blobs(4, 8, 60, 5.0, 21)?;
    let mut model = Model::mlp(8, &[24], 4, 2)?;
    let cfg = TrainConfig { epochs: 40, learning_rate: 0.01, ..TrainConfig::default() };
    train_model(&mut model, &data, None, &cfg)?;

    println!("{:<5} {:>8} {:>8} {:>8} {:>8} {:>8}", "", "success", "L2", "Linf", "iters", "queries");
    for method in AttackMethod::ALL {
        for rank in [None, Some(2)] {
            if rank.is_some() && !method.supports_targeted() {
                continue;
            }
            let mut acfg = AttackConfig::new(method, 8).with_seed(9);
            acfg.target_rank = rank;
            let (mut ok, mut l2, mut linf, mut it, mut q) = (0, 0.0, 0.0, 0, 0);
            let n = 20;
            for i in 0..n {
                let (x, y) = data.sample(i);
                let out = run_for_sample(&model, x, y, &acfg, i as u64, Some(&data))?;
                ok += out.success as usize;
                l2 += out.delta.l2_norm();
                linf += out.delta.linf_norm();
                it += out.iterations;
                q += out.queries;
            }
            let label = match rank {
                None => method.to_string(),
                Some(r) => format!("{method}/{r}"),
            };
            let n = n as f64;
            println!(
                "{label:<7} {:>6.2} {:>8.3} {:>8.3} {:>8.1} {:>8.1}",
                ok as f64 / n,
                l2 / n,
                linf / n,
                it as f64 / n,
                q as f64 / n
            );
        }
    }
    Ok(())
}
