//! Threshold checks behind `--assert`.

use std::collections::BTreeMap;
use std::fmt;

use super::{AttackRecord, DetectionRow, Evaluation, RectifyRecord, SweepRow};
use crate::attacks::AttackMethod;
use crate::metrics::{mean, median};
use crate::nn::TrainReport;

use AttackMethod::{Bim, Cw, DeepFool, Fgsm, Hsja, Jsma, LocalSearch};

const MIN_TEST_ACCURACY: f64 = 0.95;
const MIN_SUCCESS_WHITE_BOX: f64 = 0.85;
const MIN_SUCCESS_LS: f64 = 0.75;
const MIN_SUCCESS_HSJA: f64 = 0.85;
const MAX_NORM_RATIO: f64 = 0.1;
const MIN_GRADIENT_COS: f64 = 0.15;
const MAX_LS_ABS_COS: f64 = 0.1;
const MIN_TARGETED_TOP2: f64 = 0.85;
const MIN_DETECT_AE: f64 = 0.85;
const MIN_DETECT_BENIGN: f64 = 0.80;
const MAX_MANN_WHITNEY_P: f64 = 0.01;
const MIN_PIPELINE_AVG: f64 = 0.80;
const MIN_RSV_MARGIN: f64 = 0.20;
const MAX_SWEEP_SPREAD: f64 = 0.06;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

pub fn train_checks(report: &TrainReport) -> Vec<Check> {
    match report.test_accuracy {
        Some(a) => {
            vec![Check::new("test accuracy", a >= MIN_TEST_ACCURACY, format!("{a:.4} (min {MIN_TEST_ACCURACY})"))]
        }
        None => vec![],
    }
}

/// Median perturbation ordering of the untargeted pools.
pub fn attack_checks(records: &[AttackRecord]) -> Vec<Check> {
    let mut norms: BTreeMap<AttackMethod, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.targeted) {
        norms.entry(r.method).or_default().push(r.l2_delta);
    }
    let med: BTreeMap<AttackMethod, f64> = norms.iter().map(|(m, v)| (*m, median(v).unwrap_or(f64::NAN))).collect();
    let mut out = Vec::new();
    if let (Some(cw), Some(df), Some(fgsm)) = (med.get(&Cw), med.get(&DeepFool), med.get(&Fgsm)) {
        out.push(Check::new(
            "median L2: CW < DF < FGSM",
            cw < df && df < fgsm,
            format!("{cw:.4} / {df:.4} / {fgsm:.4}"),
        ));
    }
    if let Some(ls) = med.get(&LocalSearch) {
        let top =
            [Fgsm, Bim, DeepFool, Cw, Jsma].iter().filter_map(|m| med.get(m)).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if top.is_finite() {
            out.push(Check::new("median L2: LS above white-box", *ls > top, format!("{ls:.4} vs {top:.4}")));
        }
    }
    out
}

struct Cell {
    attack: AttackMethod,
    reattack: String,
    median_delta: f64,
    median_delta_prime: f64,
    mean_cos: Option<f64>,
}

fn gap_and_direction(cells: &[Cell]) -> Vec<Check> {
    let mut out = Vec::new();
    for c in cells {
        let name = format!("{} -> {}", c.attack, c.reattack);
        if matches!(c.attack, Bim | Cw | Hsja) {
            let ratio = c.median_delta_prime / c.median_delta;
            out.push(Check::new(
                format!("norm ratio {name}"),
                ratio <= MAX_NORM_RATIO,
                format!("{ratio:.4} (max {MAX_NORM_RATIO})"),
            ));
        }
        let cos = c.mean_cos.unwrap_or(f64::NAN);
        if matches!(c.attack, Fgsm | Bim | DeepFool | Cw) {
            out.push(Check::new(
                format!("mean cos {name}"),
                cos > MIN_GRADIENT_COS,
                format!("{cos:.4} (min {MIN_GRADIENT_COS})"),
            ));
        } else if c.attack == LocalSearch {
            out.push(Check::new(
                format!("mean cos {name}"),
                cos.abs() < MAX_LS_ABS_COS,
                format!("{cos:.4} (|max| {MAX_LS_ABS_COS})"),
            ));
        }
    }
    out
}

/// Magnitude gap and direction checks from re-attack records alone.
pub fn rectify_checks(records: &[RectifyRecord]) -> Vec<Check> {
    let mut groups: BTreeMap<(AttackMethod, String), Vec<&RectifyRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.target_rank.is_none()) {
        groups.entry((r.attack_method, r.reattack_method.to_string())).or_default().push(r);
    }
    let cells: Vec<Cell> = groups
        .into_iter()
        .map(|((attack, reattack), g)| {
            let d: Vec<f64> = g.iter().map(|r| r.l2_delta).collect();
            let dp: Vec<f64> = g.iter().map(|r| r.l2_delta_prime).collect();
            let cos: Vec<f64> = g.iter().filter_map(|r| r.cos_sim).collect();
            Cell {
                attack,
                reattack,
                median_delta: median(&d).unwrap_or(f64::NAN),
                median_delta_prime: median(&dp).unwrap_or(f64::NAN),
                mean_cos: mean(&cos).ok(),
            }
        })
        .collect();
    gap_and_direction(&cells)
}

pub fn detection_checks(rows: &[DetectionRow]) -> Vec<Check> {
    let mut out = Vec::new();
    if let Some(r) = rows.first() {
        out.push(Check::new(
            "benign detection accuracy",
            r.benign_accuracy >= MIN_DETECT_BENIGN,
            format!("{:.4} (min {MIN_DETECT_BENIGN})", r.benign_accuracy),
        ));
    }
    for r in rows {
        out.push(Check::new(
            format!("AE detection accuracy {}", r.attack),
            r.ae_accuracy >= MIN_DETECT_AE,
            format!("{:.4} (min {MIN_DETECT_AE})", r.ae_accuracy),
        ));
        out.push(Check::new(
            format!("cost separation {}", r.attack),
            r.mann_whitney_p < MAX_MANN_WHITNEY_P,
            format!("p = {:.3e} (max {MAX_MANN_WHITNEY_P})", r.mann_whitney_p),
        ));
        if !r.pipeline_accuracy.is_nan() {
            out.push(Check::new(
                format!("pipeline bound {}", r.attack),
                r.pipeline_accuracy <= r.ae_accuracy,
                format!("{:.4} <= {:.4}", r.pipeline_accuracy, r.ae_accuracy),
            ));
        }
    }
    let avg: Vec<f64> = rows
        .iter()
        .filter(|r| matches!(r.attack, Fgsm | Bim | Jsma | Cw) && !r.pipeline_accuracy.is_nan())
        .map(|r| r.pipeline_accuracy)
        .collect();
    if let Ok(a) = mean(&avg) {
        out.push(Check::new("pipeline Avg_a", a >= MIN_PIPELINE_AVG, format!("{a:.4} (min {MIN_PIPELINE_AVG})")));
    }
    out
}

pub fn eval_checks(eval: &Evaluation) -> Vec<Check> {
    let mut out = Vec::new();
    let mut cells = Vec::new();
    let mut targeted: BTreeMap<(String, String), BTreeMap<usize, f64>> = BTreeMap::new();
    for (k, r) in &eval.report.rows {
        let Ok(attack) = k.attack.parse::<AttackMethod>() else { continue };
        let name = format!("{} -> {}", k.attack, k.reattack);
        if let Some(rank) = k.targeted_rank {
            targeted.entry((k.attack.clone(), k.reattack.clone())).or_default().insert(rank, r.success_rate);
            continue;
        }
        let min = match attack {
            LocalSearch => MIN_SUCCESS_LS,
            Hsja => MIN_SUCCESS_HSJA,
            _ => MIN_SUCCESS_WHITE_BOX,
        };
        out.push(Check::new(
            format!("success {name}"),
            r.success_rate >= min,
            format!("{:.4} (min {min})", r.success_rate),
        ));
        cells.push(Cell {
            attack,
            reattack: k.reattack.clone(),
            median_delta: r.median_l2_delta,
            median_delta_prime: r.median_l2_delta_prime,
            mean_cos: r.mean_cos_sim,
        });
    }
    out.extend(gap_and_direction(&cells));

    let mut above_top2 = Vec::new();
    for ((attack, reattack), by_rank) in &targeted {
        let Some(&top2) = by_rank.get(&2) else { continue };
        if matches!(attack.parse(), Ok(Bim | Cw | Jsma)) {
            out.push(Check::new(
                format!("targeted Top-2 success {attack} -> {reattack}"),
                top2 >= MIN_TARGETED_TOP2,
                format!("{top2:.4} (min {MIN_TARGETED_TOP2})"),
            ));
        }
        for (&rank, &s) in by_rank.range(3..) {
            if s > top2 {
                above_top2.push(format!("{attack} -> {reattack} Top-{rank} {s:.4} > {top2:.4}"));
            }
        }
    }
    if !targeted.is_empty() {
        out.push(Check::new(
            "targeted success does not exceed Top-2 (one cell of slack)",
            above_top2.len() <= 1,
            if above_top2.is_empty() { "no cell above Top-2".to_string() } else { above_top2.join("; ") },
        ));
    }

    for attack in eval.baselines.iter().map(|b| b.attack).collect::<std::collections::BTreeSet<_>>() {
        let best_rsv = eval
            .baselines
            .iter()
            .filter(|b| b.attack == attack && b.baseline == "RSV")
            .map(|b| b.success_rate)
            .fold(f64::NEG_INFINITY, f64::max);
        if !best_rsv.is_finite() || attack != LocalSearch {
            continue;
        }
        for (k, r) in eval.report.rows.iter().filter(|(k, _)| k.attack == attack.name() && k.targeted_rank.is_none()) {
            let margin = r.success_rate - best_rsv;
            out.push(Check::new(
                format!("{} -> {} beats best RS&V", k.attack, k.reattack),
                margin >= MIN_RSV_MARGIN,
                format!("{:.4} vs {best_rsv:.4} (min margin {MIN_RSV_MARGIN})", r.success_rate),
            ));
        }
    }
    out.extend(detection_checks(&eval.detection));
    out
}

/// Spread of FGSM-rectification success across radii for the untargeted
/// gradient-attack pools.
pub fn sweep_checks(rows: &[SweepRow]) -> Vec<Check> {
    let mut by_attack: BTreeMap<AttackMethod, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.targeted_rank.is_none()) {
        by_attack.entry(r.attack).or_default().push(r.success_rate);
    }
    by_attack
        .into_iter()
        .filter(|(m, _)| matches!(m, Fgsm | Bim | DeepFool | Cw))
        .map(|(m, v)| {
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            Check::new(
                format!("sweep spread {m}"),
                hi - lo <= MAX_SWEEP_SPREAD + 1e-12,
                format!("{:.4} (max {MAX_SWEEP_SPREAD})", hi - lo),
            )
        })
        .collect()
}
