//! Success rates, perturbation norms, direction similarity and the report table.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fraction of `(true_label, rectified_label)` pairs that agree.
pub fn rectification_success_rate(pool: &[(usize, usize)]) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(pool.iter().filter(|(t, r)| t == r).count() as f64 / pool.len() as f64)
}

/// Fraction of `true` flags.
pub fn fraction(flags: impl IntoIterator<Item = bool>) -> Result<f64> {
    let (hits, n) = flags.into_iter().fold((0usize, 0usize), |(h, n), f| (h + f as usize, n + 1));
    if n == 0 {
        return Err(Error::EmptyPool);
    }
    Ok(hits as f64 / n as f64)
}

/// `<-delta, delta'> / (||delta|| ||delta'||)`.
pub fn cosine_similarity(delta: &Tensor, delta_prime: &Tensor) -> Result<f64> {
    if delta.len() != delta_prime.len() {
        return Err(Error::ShapeMismatch { expected: delta.shape().to_vec(), got: delta_prime.shape().to_vec() });
    }
    let (a, b) = (delta.dot(delta), delta_prime.dot(delta_prime));
    if a == 0.0 || b == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((-delta.dot(delta_prime) / (a * b).sqrt()).clamp(-1.0, 1.0))
}

/// Lower middle element on even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationStats {
    pub count: usize,
    pub mean_l2: f64,
    pub median_l2: f64,
    pub mean_linf: f64,
    pub median_linf: f64,
}

pub fn perturbation_stats<'a>(deltas: impl IntoIterator<Item = &'a Tensor>) -> Result<PerturbationStats> {
    let (l2, linf): (Vec<f64>, Vec<f64>) = deltas.into_iter().map(|d| (d.l2_norm(), d.linf_norm())).unzip();
    Ok(PerturbationStats {
        count: l2.len(),
        mean_l2: mean(&l2)?,
        median_l2: median(&l2)?,
        mean_linf: mean(&linf)?,
        median_linf: median(&linf)?,
    })
}

/// Row key; ordering is lexicographic over the fields, untargeted first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReportKey {
    pub dataset: String,
    pub attack: String,
    pub reattack: String,
    pub targeted_rank: Option<usize>,
}

impl ReportKey {
    pub fn new(dataset: &str, attack: &str, reattack: &str, targeted_rank: Option<usize>) -> Self {
        Self { dataset: dataset.to_string(), attack: attack.to_string(), reattack: reattack.to_string(), targeted_rank }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub success_rate: f64,
    pub mean_l2_delta: f64,
    pub median_l2_delta: f64,
    pub mean_l2_delta_prime: f64,
    pub median_l2_delta_prime: f64,
    /// `None` when no sample had both perturbations nonzero.
    pub mean_cos_sim: Option<f64>,
}

/// One rectified sample, joined with its true label.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub key: ReportKey,
    pub true_label: usize,
    pub rectified_label: usize,
    pub l2_delta: f64,
    pub l2_delta_prime: f64,
    pub cos_sim: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: BTreeMap<ReportKey, ReportRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CsvRow {
    dataset: String,
    attack: String,
    reattack: String,
    targeted_rank: Option<usize>,
    n: usize,
    success_rate: f64,
    #[serde(rename = "meanL2Delta")]
    mean_l2_delta: f64,
    #[serde(rename = "medianL2Delta")]
    median_l2_delta: f64,
    #[serde(rename = "meanL2DeltaPrime")]
    mean_l2_delta_prime: f64,
    #[serde(rename = "medianL2DeltaPrime")]
    median_l2_delta_prime: f64,
    mean_cos_sim: Option<f64>,
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "dataset",
    "attack",
    "reattack",
    "targetedRank",
    "n",
    "successRate",
    "meanL2Delta",
    "medianL2Delta",
    "meanL2DeltaPrime",
    "medianL2DeltaPrime",
    "meanCosSim",
];

impl ExperimentReport {
    pub fn insert(&mut self, key: ReportKey, row: ReportRow) -> Result<()> {
        if self.rows.contains_key(&key) {
            return Err(Error::KeyCollision(format!("{key:?}")));
        }
        self.rows.insert(key, row);
        Ok(())
    }

    pub fn get(&self, key: &ReportKey) -> Option<&ReportRow> {
        self.rows.get(key)
    }

    pub fn merge(&mut self, other: ExperimentReport) -> Result<()> {
        for (k, r) in other.rows {
            self.insert(k, r)?;
        }
        Ok(())
    }

    /// Groups records by key and aggregates each group.
    pub fn build(records: &[SampleRecord]) -> Result<Self> {
        let mut groups: BTreeMap<&ReportKey, Vec<&SampleRecord>> = BTreeMap::new();
        for r in records {
            groups.entry(&r.key).or_default().push(r);
        }
        let mut report = Self::default();
        for (key, group) in groups {
            let pairs: Vec<_> = group.iter().map(|r| (r.true_label, r.rectified_label)).collect();
            let d: Vec<f64> = group.iter().map(|r| r.l2_delta).collect();
            let dp: Vec<f64> = group.iter().map(|r| r.l2_delta_prime).collect();
            let cos: Vec<f64> = group.iter().filter_map(|r| r.cos_sim).collect();
            report.insert(
                key.clone(),
                ReportRow {
                    n: group.len(),
                    success_rate: rectification_success_rate(&pairs)?,
                    mean_l2_delta: mean(&d)?,
                    median_l2_delta: median(&d)?,
                    mean_l2_delta_prime: mean(&dp)?,
                    median_l2_delta_prime: median(&dp)?,
                    mean_cos_sim: mean(&cos).ok(),
                },
            )?;
        }
        Ok(report)
    }

    /// Writes the report with the fixed column order. `comments` become
    /// leading `#` lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(REPORT_COLUMNS)?;
        for (k, r) in &self.rows {
            w.serialize(CsvRow {
                dataset: k.dataset.clone(),
                attack: k.attack.clone(),
                reattack: k.reattack.clone(),
                targeted_rank: k.targeted_rank,
                n: r.n,
                success_rate: r.success_rate,
                mean_l2_delta: r.mean_l2_delta,
                median_l2_delta: r.median_l2_delta,
                mean_l2_delta_prime: r.mean_l2_delta_prime,
                median_l2_delta_prime: r.median_l2_delta_prime,
                mean_cos_sim: r.mean_cos_sim,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut report = Self::default();
        for row in rd.deserialize() {
            let r: CsvRow = row?;
            report.insert(
                ReportKey {
                    dataset: r.dataset,
                    attack: r.attack,
                    reattack: r.reattack,
                    targeted_rank: r.targeted_rank,
                },
                ReportRow {
                    n: r.n,
                    success_rate: r.success_rate,
                    mean_l2_delta: r.mean_l2_delta,
                    median_l2_delta: r.median_l2_delta,
                    mean_l2_delta_prime: r.mean_l2_delta_prime,
                    median_l2_delta_prime: r.median_l2_delta_prime,
                    mean_cos_sim: r.mean_cos_sim,
                },
            )?;
        }
        Ok(report)
    }
}
