use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn blobs_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/blobs.toml")
}

fn advrect(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advrect"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = advrect(&["train"], &dir.path().join("nope.toml"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn usage_error_without_config() {
    let out = Command::new(env!("CARGO_BIN_EXE_advrect")).arg("train").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn malformed_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = fs::read_to_string(blobs_config()).unwrap().replace("configVersion = 1", "configVersion = 1\nextra = 3");
    fs::write(&cfg, text).unwrap();
    let out = advrect(&["train"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn attack_without_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = advrect(&["attack"], &blobs_config(), dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = advrect(&["train"], &blobs_config(), dir);
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).contains("test accuracy 1.0000"));
    }
    assert_eq!(fs::read(a.path().join("model.bin")).unwrap(), fs::read(b.path().join("model.bin")).unwrap());
}

#[test]
fn blobs_pipeline_passes_its_checks_under_any_job_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, jobs) in [(a.path(), "1"), (b.path(), "3")] {
        for stage in ["train", "attack", "rectify", "detect", "eval", "sweep"] {
            let out = advrect(&[stage, "--assert", "--jobs", jobs], &blobs_config(), dir);
            let stdout = String::from_utf8_lossy(&out.stdout);
            assert_eq!(out.status.code(), Some(0), "{stage}:\n{stdout}");
            assert!(!stdout.contains("FAIL"));
        }
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn failed_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("weak.toml");
    // an untrained victim stays below the accuracy floor
    let text = fs::read_to_string(blobs_config())
        .unwrap()
        .replace("epochs = 40", "epochs = 1")
        .replace("learningRate = 0.01", "learningRate = 1e-9");
    fs::write(&cfg, text).unwrap();
    let out = advrect(&["train", "--assert"], &cfg, dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(2), "{stdout}");
    assert!(stdout.contains("FAIL test accuracy"));
}
