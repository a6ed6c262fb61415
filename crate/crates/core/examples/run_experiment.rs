//! Runs the whole experiment pipeline from a TOML config, the same stages
//! the `advrect` binary exposes, and prints the threshold checks.
//!
//!     cargo run --release --example run_experiment [-- configs/blobs.toml]

use std::path::PathBuf;

use advrect::experiment::{self, Experiment};

fn main() -> advrect::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| root.join("configs/blobs.toml"));
    let out = tempfile::tempdir()?;
    let exp = Experiment::load(&config, out.path())?;
    println!("config {} (hash {})", config.display(), &exp.config.hash()[..12]);

    let mut checks = experiment::train_checks(&exp.train()?);
    checks.extend(experiment::attack_checks(&exp.attack()?));
    exp.rectify()?;
    if exp.config.detector.is_some() {
        exp.detect()?;
    }
    let eval = exp.eval()?;
    checks.extend(experiment::eval_checks(&eval));
    checks.extend(experiment::sweep_checks(&exp.sweep()?));

    println!(
        "{:<6} {:<4} {:>4} {:>4} {:>8} {:>10} {:>10} {:>7}",
        "attack", "re", "rank", "n", "success", "med |d|", "med |d'|", "cos"
    );
    for (k, r) in &eval.report.rows {
        println!(
            "{:<6} {:<4} {:>4} {:>4} {:>8.3} {:>10.4} {:>10.5} {:>7.3}",
            k.attack,
            k.reattack,
            k.targeted_rank.map_or("-".to_string(), |r| r.to_string()),
            r.n,
            r.success_rate,
            r.median_l2_delta,
            r.median_l2_delta_prime,
            r.mean_cos_sim.unwrap_or(f64::NAN)
        );
    }
    for c in &checks {
        println!("{c}");
    }
    for f in std::fs::read_dir(out.path())? {
        println!("wrote {}", f?.file_name().to_string_lossy());
    }
    Ok(())
}
