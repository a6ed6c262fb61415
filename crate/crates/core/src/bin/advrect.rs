use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advrect::experiment::{self, CellTime, Check, Experiment};

#[derive(Parser)]
#[command(name = "advrect", version, about = "Rectify adversarial examples by re-attacking them")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the victim model.
    Train(Common),
    /// Build adversarial-example pools for the attack grid.
    Attack(Common),
    /// Re-attack the pooled examples (and run baselines).
    Rectify(Common),
    /// Calibrate the cost detector and score benign and adversarial inputs.
    Detect(Common),
    /// Join results with true labels and write the reports.
    Eval(Common),
    /// FGSM rectification across re-attack radii.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Exit with status 2 when a threshold check fails.
    #[arg(long = "assert")]
    assert: bool,
    /// Dataset cache root (overrides ADVRECT_DATA).
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(checks) => report(&checks),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> advrect::Result<Option<Vec<Check>>> {
    let (stage, c) = match &cmd {
        Cmd::Train(c) => ("train", c),
        Cmd::Attack(c) => ("attack", c),
        Cmd::Rectify(c) => ("rectify", c),
        Cmd::Detect(c) => ("detect", c),
        Cmd::Eval(c) => ("eval", c),
        Cmd::Sweep(c) => ("sweep", c),
    };
    let mut exp = Experiment::load(&c.config, &c.out)?;
    if let Some(d) = &c.data {
        exp.data_root = Some(d.clone());
    }
    let checks = experiment::with_jobs(c.jobs, || -> advrect::Result<Vec<Check>> {
        Ok(match cmd {
            Cmd::Train(_) => {
                let r = exp.train()?;
                println!("train accuracy {:.4}", r.train_accuracy);
                if let Some(t) = r.test_accuracy {
                    println!("test accuracy {t:.4}");
                }
                experiment::train_checks(&r)
            }
            Cmd::Attack(_) => {
                let (r, times) = exp.attack_timed()?;
                print_times(&times);
                println!("{} adversarial examples", r.len());
                experiment::attack_checks(&r)
            }
            Cmd::Rectify(_) => {
                let (r, times) = exp.rectify_timed()?;
                print_times(&times);
                let flipped = r.iter().filter(|r| r.flipped).count();
                println!("{} re-attacks, {flipped} flipped", r.len());
                experiment::rectify_checks(&r)
            }
            Cmd::Detect(_) => {
                let v = exp.detect()?;
                let rows = experiment::detection_rows(exp.dataset_name(), &v, None)?;
                for r in &rows {
                    println!(
                        "{}: AE accuracy {:.4}, benign accuracy {:.4}, p = {:.3e}",
                        r.attack, r.ae_accuracy, r.benign_accuracy, r.mann_whitney_p
                    );
                }
                experiment::detection_checks(&rows)
            }
            Cmd::Eval(_) => {
                let e = exp.eval()?;
                println!("{} report rows", e.report.rows.len());
                experiment::eval_checks(&e)
            }
            Cmd::Sweep(_) => experiment::sweep_checks(&exp.sweep()?),
        })
    })??;
    println!("{stage}: artifacts in {}", exp.out.display());
    Ok(c.assert.then_some(checks))
}

fn print_times(times: &[CellTime]) {
    for t in times {
        let cell = t.target_rank.map_or("untargeted".to_string(), |r| format!("Top-{r}"));
        eprintln!("  {} {cell}: {:.1?}", t.attack, t.elapsed);
    }
}

fn report(checks: &Option<Vec<Check>>) -> ExitCode {
    let Some(checks) = checks else {
        return ExitCode::SUCCESS;
    };
    for c in checks {
        println!("{c}");
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
