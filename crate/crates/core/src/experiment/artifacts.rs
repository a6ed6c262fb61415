//! CSV artifacts and the binary adversarial-example sidecar.
//!
//! Every CSV starts with `#` comment lines carrying the stage, the config
//! hash and the seed. Floats use the shortest representation that reads
//! back to the same value.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackMethod;
use crate::error::{Error, Result};
use crate::rectifier::ReattackMethod;
use crate::tensor::Tensor;

pub const ATTACKS_CSV: &str = "attacks.csv";
pub const ADVERSARIAL_BIN: &str = "adversarial.bin";
pub const RECTIFY_CSV: &str = "rectify.csv";
pub const BASELINES_CSV: &str = "baselines.csv";
pub const CALIBRATION_TXT: &str = "calibration.txt";
pub const KNN_TRAINING_CSV: &str = "knn_training.csv";
pub const VERDICTS_CSV: &str = "verdicts.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const BASELINE_REPORT_CSV: &str = "baseline_report.csv";
pub const DETECTION_CSV: &str = "detection.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const TRAIN_CSV: &str = "train.csv";

/// One pooled adversarial example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttackRecord {
    pub sample_id: usize,
    pub method: AttackMethod,
    pub targeted: bool,
    pub target_rank: Option<usize>,
    pub success: bool,
    pub iterations: usize,
    pub queries: usize,
    pub l2_delta: f64,
    pub linf_delta: f64,
    pub orig_label: usize,
    pub adv_label: usize,
}

/// One re-attacked adversarial example. `trueLabel` stays empty: the
/// rectifier never sees it, evaluation joins it in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RectifyRecord {
    pub sample_id: usize,
    pub attack_method: AttackMethod,
    pub reattack_method: ReattackMethod,
    pub flipped: bool,
    pub rectified_label: usize,
    pub true_label: Option<usize>,
    pub iterations: usize,
    pub l2_delta_prime: f64,
    pub target_rank: Option<usize>,
    pub l2_delta: f64,
    pub cos_sim: Option<f64>,
}

/// Label a baseline defence assigns to one adversarial example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BaselineRecord {
    pub sample_id: usize,
    pub attack_method: AttackMethod,
    pub baseline: String,
    pub param: f64,
    pub label: usize,
}

/// Detector and pipeline result for one benign or adversarial input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerdictRecord {
    pub sample_id: usize,
    /// Empty for benign inputs.
    pub attack_method: Option<AttackMethod>,
    pub cost: usize,
    pub z_score: f64,
    pub is_ae: bool,
    pub knn_is_ae: bool,
    /// Label after detection and, when flagged, rectification.
    pub defended_label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KnnRecord {
    pub cost: usize,
    pub is_ae: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    /// Filled on the last row only.
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BaselineReportRow {
    pub dataset: String,
    pub attack: AttackMethod,
    pub baseline: String,
    pub param: f64,
    pub n: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionRow {
    pub dataset: String,
    pub attack: AttackMethod,
    pub n: usize,
    pub ae_accuracy: f64,
    pub ae_accuracy_knn: f64,
    pub benign_n: usize,
    pub benign_accuracy: f64,
    pub benign_accuracy_knn: f64,
    pub mean_cost_ae: f64,
    pub mean_cost_benign: f64,
    pub mann_whitney_p: f64,
    /// Fraction of adversarial examples whose defended label is correct.
    pub pipeline_accuracy: f64,
    /// Same on the benign half.
    pub benign_pipeline_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub dataset: String,
    pub attack: AttackMethod,
    pub targeted_rank: Option<usize>,
    pub epsilon: f64,
    pub n: usize,
    pub success_rate: f64,
    pub flip_rate: f64,
}

/// A CSV row type with a fixed column list (written even for empty files).
pub trait Artifact: Serialize + DeserializeOwned {
    const COLUMNS: &'static [&'static str];
}

macro_rules! artifact {
    ($t:ty, [$($c:literal),* $(,)?]) => {
        impl Artifact for $t {
            const COLUMNS: &'static [&'static str] = &[$($c),*];
        }
    };
}

artifact!(
    AttackRecord,
    [
        "sampleId",
        "method",
        "targeted",
        "targetRank",
        "success",
        "iterations",
        "queries",
        "l2Delta",
        "linfDelta",
        "origLabel",
        "advLabel",
    ]
);
artifact!(
    RectifyRecord,
    [
        "sampleId",
        "attackMethod",
        "reattackMethod",
        "flipped",
        "rectifiedLabel",
        "trueLabel",
        "iterations",
        "l2DeltaPrime",
        "targetRank",
        "l2Delta",
        "cosSim",
    ]
);
artifact!(BaselineRecord, ["sampleId", "attackMethod", "baseline", "param", "label"]);
artifact!(VerdictRecord, ["sampleId", "attackMethod", "cost", "zScore", "isAe", "knnIsAe", "defendedLabel"]);
artifact!(KnnRecord, ["cost", "isAe"]);
artifact!(TrainRecord, ["epoch", "meanLoss", "trainAccuracy", "testAccuracy"]);
artifact!(BaselineReportRow, ["dataset", "attack", "baseline", "param", "n", "successRate"]);
artifact!(
    DetectionRow,
    [
        "dataset",
        "attack",
        "n",
        "aeAccuracy",
        "aeAccuracyKnn",
        "benignN",
        "benignAccuracy",
        "benignAccuracyKnn",
        "meanCostAe",
        "meanCostBenign",
        "mannWhitneyP",
        "pipelineAccuracy",
        "benignPipelineAccuracy",
    ]
);
artifact!(SweepRow, ["dataset", "attack", "targetedRank", "epsilon", "n", "successRate", "flipRate"]);

/// Writes `rows` as CSV with `comments` as leading `#` lines.
pub fn write_csv<T: Artifact>(path: impl AsRef<Path>, comments: &[String], rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(T::COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: Artifact>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(BufReader::new(file));
    let found: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if found != T::COLUMNS {
        return Err(Error::Format(format!("{}: unexpected columns {found:?}", path.display())));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

const SIDECAR_MAGIC: &[u8] = b"ADVRECT-AES/1\n";

/// An adversarial example as stored next to `attacks.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredAe {
    pub sample_id: usize,
    pub method: AttackMethod,
    pub target_rank: Option<usize>,
    pub adv: Tensor,
}

/// Layout: magic, record count, then per record the method name (u8 length
/// and bytes), target rank (0 = untargeted), sample id, shape (u8 rank and
/// u64 dims) and the data, all integers u64 and reals f64 little-endian.
pub fn write_sidecar(path: impl AsRef<Path>, aes: &[StoredAe]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(SIDECAR_MAGIC)?;
    w.write_all(&(aes.len() as u64).to_le_bytes())?;
    for ae in aes {
        let name = ae.method.name().as_bytes();
        w.write_all(&[name.len() as u8])?;
        w.write_all(name)?;
        w.write_all(&(ae.target_rank.unwrap_or(0) as u64).to_le_bytes())?;
        w.write_all(&(ae.sample_id as u64).to_le_bytes())?;
        w.write_all(&[ae.adv.shape().len() as u8])?;
        for &d in ae.adv.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in ae.adv.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Vec<StoredAe>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut r = bytes.as_slice();
    let mut magic = vec![0u8; SIDECAR_MAGIC.len()];
    read_exact(&mut r, &mut magic)?;
    if magic != SIDECAR_MAGIC {
        return Err(Error::Format(format!("{}: not an adversarial-example file", path.display())));
    }
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let mut len = [0u8; 1];
        read_exact(&mut r, &mut len)?;
        let mut name = vec![0u8; len[0] as usize];
        read_exact(&mut r, &mut name)?;
        let method: AttackMethod = String::from_utf8_lossy(&name).parse()?;
        let rank = read_u64(&mut r)? as usize;
        let sample_id = read_u64(&mut r)? as usize;
        read_exact(&mut r, &mut len)?;
        let shape = (0..len[0]).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b).map(|()| f64::from_le_bytes(b))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(StoredAe {
            sample_id,
            method,
            target_rank: (rank != 0).then_some(rank),
            adv: Tensor::new(shape, data)?,
        });
    }
    if !r.is_empty() {
        return Err(Error::Format(format!("{}: trailing bytes", path.display())));
    }
    Ok(out)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format("truncated adversarial-example file".into()))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn serde_header<T: Serialize>(row: &T) -> Vec<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.serialize(row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().split(',').map(str::to_string).collect()
    }

    fn check<T: Artifact>(row: T) {
        assert_eq!(serde_header(&row), T::COLUMNS);
    }

    #[test]
    fn columns_match_field_names() {
        check(AttackRecord {
            sample_id: 0,
            method: AttackMethod::Fgsm,
            targeted: false,
            target_rank: None,
            success: true,
            iterations: 1,
            queries: 2,
            l2_delta: 0.5,
            linf_delta: 0.1,
            orig_label: 3,
            adv_label: 5,
        });
        check(RectifyRecord {
            sample_id: 0,
            attack_method: AttackMethod::Cw,
            reattack_method: ReattackMethod::Bim,
            flipped: true,
            rectified_label: 1,
            true_label: None,
            iterations: 3,
            l2_delta_prime: 0.1,
            target_rank: Some(2),
            l2_delta: 1.0,
            cos_sim: Some(0.3),
        });
        check(BaselineRecord {
            sample_id: 0,
            attack_method: AttackMethod::LocalSearch,
            baseline: "RSV".into(),
            param: 0.1,
            label: 1,
        });
        check(VerdictRecord {
            sample_id: 0,
            attack_method: None,
            cost: 3,
            z_score: -1.0,
            is_ae: false,
            knn_is_ae: false,
            defended_label: 2,
        });
        check(KnnRecord { cost: 1, is_ae: true });
        check(TrainRecord { epoch: 0, mean_loss: 0.1, train_accuracy: 0.9, test_accuracy: None });
        check(BaselineReportRow {
            dataset: "d".into(),
            attack: AttackMethod::Fgsm,
            baseline: "BLUR".into(),
            param: 1.0,
            n: 1,
            success_rate: 1.0,
        });
        check(DetectionRow {
            dataset: "d".into(),
            attack: AttackMethod::Bim,
            n: 1,
            ae_accuracy: 1.0,
            ae_accuracy_knn: 1.0,
            benign_n: 1,
            benign_accuracy: 1.0,
            benign_accuracy_knn: 1.0,
            mean_cost_ae: 1.0,
            mean_cost_benign: 2.0,
            mann_whitney_p: 0.5,
            pipeline_accuracy: 1.0,
            benign_pipeline_accuracy: 1.0,
        });
        check(SweepRow {
            dataset: "d".into(),
            attack: AttackMethod::Fgsm,
            targeted_rank: None,
            epsilon: 0.1,
            n: 1,
            success_rate: 1.0,
            flip_rate: 1.0,
        });
    }

    #[test]
    fn csv_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let rows = vec![KnnRecord { cost: 4, is_ae: false }, KnnRecord { cost: 1, is_ae: true }];
        write_csv(&p, &["stage test".into(), "seed 3".into()], &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# stage test\n# seed 3\ncost,isAe\n"));
        assert_eq!(read_csv::<KnnRecord>(&p).unwrap(), rows);
        write_csv::<KnnRecord>(&p, &[], &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "cost,isAe\n");
        assert!(read_csv::<TrainRecord>(&p).is_err());
    }

    #[test]
    fn floats_use_shortest_round_trip_form() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let row = TrainRecord { epoch: 1, mean_loss: 0.1, train_accuracy: 1.0 / 3.0, test_accuracy: Some(0.95) };
        write_csv(&p, &[], std::slice::from_ref(&row)).unwrap();
        assert!(fs::read_to_string(&p).unwrap().contains("1,0.1,0.3333333333333333,0.95"));
        assert_eq!(read_csv::<TrainRecord>(&p).unwrap(), vec![row]);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let aes = vec![
            StoredAe {
                sample_id: 4,
                method: AttackMethod::Hsja,
                target_rank: None,
                adv: Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 1.0 / 3.0]).unwrap(),
            },
            StoredAe {
                sample_id: 9,
                method: AttackMethod::DeepFool,
                target_rank: Some(3),
                adv: Tensor::new(vec![2], vec![0.0, 1.0]).unwrap(),
            },
        ];
        write_sidecar(&p, &aes).unwrap();
        assert_eq!(read_sidecar(&p).unwrap(), aes);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_sidecar(&p), Err(Error::Format(_))));
        fs::write(&p, b"nope").unwrap();
        assert!(matches!(read_sidecar(&p), Err(Error::Format(_))));
    }
}
