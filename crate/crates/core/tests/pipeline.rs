use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use advrect::attacks::AttackMethod;
use advrect::experiment::{
    read_csv, AttackRecord, Experiment, RectifyRecord, RunConfig, SweepRow, ATTACKS_CSV, RECTIFY_CSV, SWEEP_CSV,
};
use advrect::rectifier::RectifyConfig;
use advrect::Error;

const BLOBS: &str = r#"
configVersion = 1
seed = 2
poolSize = 12

[dataset]
kind = "blobs"
classes = 3
dim = 4
perClass = 60
separation = 6.0
seed = 3

[model]
arch = "mlp"
hidden = [12]
seed = 1

[model.train]
epochs = 40
learningRate = 0.01
seed = 1

[[attacks]]
method = "FGSM"
epsilon = 0.5
epsilonSteps = 50

[[attacks]]
method = "DF"

[[attacks]]
method = "CW"
targetRanks = [2]

[[rectify]]
method = "FGSM"

[[rectify]]
method = "DF"
"#;

fn experiment(dir: &Path, toml: &str) -> Experiment {
    Experiment::new(RunConfig::from_toml(toml).unwrap(), ".", dir)
}

#[test]
fn stages_need_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment(dir.path(), BLOBS);
    assert!(exp.attack().is_err());
    assert!(exp.rectify().is_err());
}

#[test]
fn fgsm_grid_fills_the_pool() {
    let dir = tempfile::tempdir().unwrap();
    let toml =
        BLOBS.split("[[attacks]]\nmethod = \"DF\"").next().unwrap().to_string() + "\n[[rectify]]\nmethod = \"FGSM\"\n";
    let exp = experiment(dir.path(), &toml);
    exp.train().unwrap();
    let records = exp.attack().unwrap();
    assert_eq!(records.len(), 12);
    assert!(records.iter().all(|r| r.method == AttackMethod::Fgsm && r.success));
    let on_disk: Vec<AttackRecord> = read_csv(dir.path().join(ATTACKS_CSV)).unwrap();
    assert_eq!(on_disk, records);
}

#[test]
fn insufficient_pool_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment(dir.path(), &BLOBS.replace("poolSize = 12", "poolSize = 1000"));
    exp.train().unwrap();
    assert!(matches!(exp.attack(), Err(Error::InsufficientPool { .. })));
}

#[test]
fn full_pipeline_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment(dir.path(), BLOBS);
    exp.train().unwrap();
    let attacks = exp.attack().unwrap();
    let rectified = exp.rectify().unwrap();
    let eval = exp.eval().unwrap();
    let sweep = exp.sweep().unwrap();

    // 12 untargeted FGSM/DF/CW + 12 Top-2 CW, each re-attacked twice
    assert_eq!(attacks.len(), 48);
    assert_eq!(rectified.len(), 96);
    assert!(rectified.iter().all(|r| r.true_label.is_none()));

    // eval's join, recomputed from rectify.csv and the test labels
    let (_, test) = exp.datasets().unwrap();
    let on_disk: Vec<RectifyRecord> = read_csv(dir.path().join(RECTIFY_CSV)).unwrap();
    let mut hits: BTreeMap<(String, String, Option<usize>), (usize, usize)> = BTreeMap::new();
    for r in &on_disk {
        let e = hits.entry((r.attack_method.to_string(), r.reattack_method.to_string(), r.target_rank)).or_default();
        e.0 += (r.rectified_label == test.labels()[r.sample_id]) as usize;
        e.1 += 1;
    }
    assert_eq!(eval.report.rows.len(), hits.len());
    for (k, row) in &eval.report.rows {
        let (ok, n) = hits[&(k.attack.clone(), k.reattack.clone(), k.targeted_rank)];
        assert_eq!(row.n, n);
        assert_eq!(row.success_rate, ok as f64 / n as f64);
    }

    // five radii per untargeted and targeted cell
    assert_eq!(sweep.len(), 5 * 4);
    let on_disk: Vec<SweepRow> = read_csv(dir.path().join(SWEEP_CSV)).unwrap();
    assert_eq!(on_disk, sweep);
    assert_eq!(RectifyConfig::fgsm().epsilon, 1.0);
    for s in sweep.iter().filter(|s| s.epsilon == 1.0) {
        let k = eval
            .report
            .rows
            .iter()
            .find(|(k, _)| k.attack == s.attack.name() && k.reattack == "FGSM" && k.targeted_rank == s.targeted_rank)
            .unwrap();
        assert_eq!(s.success_rate, k.1.success_rate, "{} {:?}", s.attack, s.targeted_rank);
    }

    let hash = exp.config.hash();
    for e in fs::read_dir(dir.path()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "csv") {
            let text = fs::read_to_string(&p).unwrap();
            let head: Vec<&str> = text.lines().take(3).collect();
            assert!(head[0].starts_with("# advrect "), "{}", p.display());
            assert_eq!(head[1], format!("# configHash {hash}"));
            assert_eq!(head[2], "# seed 2");
        }
    }
}

#[test]
fn rerun_reproduces_every_artifact() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let exp = experiment(dir, BLOBS);
        exp.train().unwrap();
        exp.attack().unwrap();
        exp.rectify().unwrap();
        exp.eval().unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for f in ["model.bin", "train.csv", ATTACKS_CSV, "adversarial.bin", RECTIFY_CSV, "report.csv"] {
        assert!(names.iter().any(|n| n == f), "{f} missing");
    }
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}
