//! Experiment orchestration behind the `advrect` binary.
//!
//! A run is a [`RunConfig`] plus an output directory. Each stage reads the
//! artifacts of the earlier ones from that directory and writes its own:
//!
//! | stage   | reads                                  | writes |
//! |---------|----------------------------------------|--------|
//! | train   | dataset                                | model file, `train.csv` |
//! | attack  | model, test split                      | `attacks.csv`, `adversarial.bin` |
//! | rectify | model, `adversarial.bin`, test inputs  | `rectify.csv`, `baselines.csv` |
//! | detect  | model, both splits, `adversarial.bin`  | `calibration.txt`, `knn_training.csv`, `verdicts.csv` |
//! | eval    | the CSVs above, test labels            | `report.csv`, `baseline_report.csv`, `detection.csv` |
//! | sweep   | model, `adversarial.bin`, `attacks.csv`| `sweep.csv` |
//!
//! Per-sample work runs on the current rayon pool and is collected in sample
//! order with per-sample seeds, so the thread count never changes an
//! artifact.

mod artifacts;
mod checks;
mod config;

pub use artifacts::*;
pub use checks::{attack_checks, detection_checks, eval_checks, rectify_checks, sweep_checks, train_checks, Check};
pub use config::{
    Arch, AttackSpec, BaselineSpec, DatasetSpec, DetectorSpec, ModelSpec, RectifySpec, RunConfig, SweepSpec,
    CONFIG_VERSION, SWEEP_EPSILONS,
};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::attacks::{self, run_for_sample, AttackMethod, AttackOutcome, Bounds};
use crate::data::{load_idx, make_blobs, make_moons, scan_pool, Dataset, DATA_DIR_ENV};
use crate::defense::{
    self, calibrate, defend, detect_knn, gaussian_blur, mann_whitney_less, random_pixel_replacement, rsv_rectify,
    CostCalibration,
};
use crate::error::{Error, Result};
use crate::metrics::{cosine_similarity, fraction, mean, ExperimentReport, ReportKey, SampleRecord};
use crate::nn::{load_model, save_model, train_model, Layer, Model, TrainReport};
use crate::rectifier::{rectify, RectifyConfig, RectifyOutcome};
use crate::tensor::Tensor;

pub struct Experiment {
    pub config: RunConfig,
    /// Relative dataset paths resolve against this directory.
    pub base_dir: PathBuf,
    pub out: PathBuf,
    /// Dataset cache root; an IDX dataset `name` is read from
    /// `<root>/<name>`. Defaults to `$ADVRECT_DATA`.
    pub data_root: Option<PathBuf>,
}

/// Wall time spent on one attack-grid cell by a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTime {
    pub attack: AttackMethod,
    pub target_rank: Option<usize>,
    pub elapsed: Duration,
}

/// Everything `eval` produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: ExperimentReport,
    pub baselines: Vec<BaselineReportRow>,
    pub detection: Vec<DetectionRow>,
}

impl Experiment {
    pub fn new(config: RunConfig, base_dir: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            config,
            base_dir: base_dir.into(),
            out: out.into(),
            data_root: std::env::var_os(DATA_DIR_ENV).map(PathBuf::from),
        }
    }

    pub fn load(config_path: impl AsRef<Path>, out: impl Into<PathBuf>) -> Result<Self> {
        let path = config_path.as_ref();
        let config = RunConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self::new(config, base, out))
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn comments(&self, stage: &str) -> Vec<String> {
        vec![
            format!("advrect {stage}"),
            format!("configHash {}", self.config.hash()),
            format!("seed {}", self.config.seed),
        ]
    }

    fn write<T: Artifact>(&self, file: &str, stage: &str, rows: &[T]) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        write_csv(self.path(file), &self.comments(stage), rows)
    }

    pub fn dataset_name(&self) -> &str {
        self.config.dataset.name()
    }

    /// `(train, test)` splits.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        match &self.config.dataset {
            DatasetSpec::Idx { name, dir, train_limit, test_limit } => {
                let root = match &self.data_root {
                    Some(d) => d.join(name),
                    None => self.base_dir.join(dir),
                };
                let load = |split: &str, limit: &Option<usize>| -> Result<Dataset> {
                    let d = load_idx(
                        idx_file(&root, &format!("{split}-images-idx3-ubyte")),
                        idx_file(&root, &format!("{split}-labels-idx1-ubyte")),
                    )?;
                    Ok(match limit {
                        Some(n) => d.head(*n),
                        None => d,
                    })
                };
                Ok((load("train", train_limit)?, load("t10k", test_limit)?))
            }
            DatasetSpec::Blobs { classes, dim, per_class, separation, seed } => {
                split_thirds(make_blobs(*classes, *dim, *per_class, *separation, *seed)?)
            }
            DatasetSpec::Moons { n, noise, seed } => split_thirds(make_moons(*n, *noise, *seed)?),
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.path(&self.config.model.file)
    }

    pub fn load_model(&self) -> Result<Model> {
        let p = self.model_path();
        if !p.exists() {
            return Err(Error::Config(format!("model file {} not found; run `train` first", p.display())));
        }
        load_model(p)
    }

    /// Fresh, untrained victim for the configured architecture.
    pub fn build_model(&self, train: &Dataset) -> Result<Model> {
        let spec = &self.config.model;
        let (x, _) = train.sample(0);
        let classes = train.num_classes();
        match spec.arch {
            Arch::Cnn => {
                let &[c, h, w] = x.shape() else {
                    return Err(Error::Config(format!("cnn needs (c, h, w) inputs, got {:?}", x.shape())));
                };
                Model::small_cnn([c, h, w], classes, spec.seed)
            }
            Arch::Mlp => {
                let mut layers = Vec::new();
                if x.shape().len() > 1 {
                    layers.push(Layer::Flatten);
                }
                let mut width = x.len();
                for &h in &spec.hidden {
                    layers.push(Layer::Dense { inputs: width, outputs: h });
                    layers.push(Layer::Relu);
                    width = h;
                }
                layers.push(Layer::Dense { inputs: width, outputs: classes });
                Model::new(x.shape().to_vec(), layers, spec.seed)
            }
        }
    }

    pub fn train(&self) -> Result<TrainReport> {
        let (train, test) = self.datasets()?;
        let mut model = self.build_model(&train)?;
        let report = train_model(&mut model, &train, Some(&test), &self.config.model.train)?;
        fs::create_dir_all(&self.out)?;
        save_model(&model, self.model_path())?;
        let last = report.epochs.len().saturating_sub(1);
        let rows: Vec<_> = report
            .epochs
            .iter()
            .map(|e| TrainRecord {
                epoch: e.epoch,
                mean_loss: e.mean_loss,
                train_accuracy: e.train_accuracy,
                test_accuracy: if e.epoch == last { report.test_accuracy } else { None },
            })
            .collect();
        self.write(TRAIN_CSV, "train", &rows)?;
        Ok(report)
    }

    /// Builds one pool per attack-grid cell from the test split: the first
    /// `poolSize` correctly classified samples the attack turns adversarial.
    pub fn attack(&self) -> Result<Vec<AttackRecord>> {
        Ok(self.attack_timed()?.0)
    }

    /// [`Experiment::attack`], also returning the wall time of each cell.
    pub fn attack_timed(&self) -> Result<(Vec<AttackRecord>, Vec<CellTime>)> {
        let model = self.load_model()?;
        let (train, test) = self.datasets()?;
        let mut records = Vec::new();
        let mut stored = Vec::new();
        let mut times = Vec::new();
        for spec in &self.config.attacks {
            for rank in spec.cells() {
                let start = Instant::now();
                let cfg = spec.config(model.input_len(), self.config.seed, rank);
                let pool = scan_pool(&test, self.config.pool_size, |i, x, y| {
                    if model.predict(x)? != y {
                        return Ok(None);
                    }
                    Ok(attempt(run_for_sample(&model, x, y, &cfg, i as u64, Some(&train)))?.filter(|o| o.success))
                })?;
                for (i, o) in pool {
                    records.push(attack_record(i, spec.method, rank, &o));
                    stored.push(StoredAe { sample_id: i, method: spec.method, target_rank: rank, adv: o.adv });
                }
                times.push(CellTime { attack: spec.method, target_rank: rank, elapsed: start.elapsed() });
            }
        }
        self.write(ATTACKS_CSV, "attack", &records)?;
        write_sidecar(self.path(ADVERSARIAL_BIN), &stored)?;
        Ok((records, times))
    }

    fn stored(&self) -> Result<Vec<StoredAe>> {
        read_sidecar(self.path(ADVERSARIAL_BIN))
    }

    /// Re-attacks every stored adversarial example with every configured
    /// rectifier, then runs the configured baselines. Labels are not read.
    pub fn rectify(&self) -> Result<Vec<RectifyRecord>> {
        Ok(self.rectify_timed()?.0)
    }

    /// [`Experiment::rectify`], also returning the wall time spent on each
    /// attack cell, summed over the re-attacks. Baselines are not timed.
    pub fn rectify_timed(&self) -> Result<(Vec<RectifyRecord>, Vec<CellTime>)> {
        let model = self.load_model()?;
        let (_, test) = self.datasets()?;
        let aes = self.stored()?;
        let cells: Vec<&[StoredAe]> =
            aes.chunk_by(|a, b| a.method == b.method && a.target_rank == b.target_rank).collect();
        let mut times: Vec<CellTime> = cells
            .iter()
            .map(|c| CellTime { attack: c[0].method, target_rank: c[0].target_rank, elapsed: Duration::ZERO })
            .collect();
        let mut records = Vec::new();
        for spec in &self.config.rectify {
            let cfg = spec.config();
            for (cell, time) in cells.iter().zip(&mut times) {
                let start = Instant::now();
                let batch: Vec<RectifyRecord> = cell
                    .par_iter()
                    .map(|ae| {
                        let x = test.sample(ae.sample_id).0;
                        let out = rectify_or_stay(&model, &ae.adv, &cfg)?;
                        let delta = ae.adv.sub(x);
                        Ok(RectifyRecord {
                            sample_id: ae.sample_id,
                            attack_method: ae.method,
                            reattack_method: cfg.method,
                            flipped: out.flipped,
                            rectified_label: out.new_label,
                            true_label: None,
                            iterations: out.iterations,
                            l2_delta_prime: out.delta_prime.l2_norm(),
                            target_rank: ae.target_rank,
                            l2_delta: delta.l2_norm(),
                            cos_sim: cosine_similarity(&delta, &out.delta_prime).ok(),
                        })
                    })
                    .collect::<Result<_>>()?;
                records.extend(batch);
                time.elapsed += start.elapsed();
            }
        }
        self.write(RECTIFY_CSV, "rectify", &records)?;
        if let Some(b) = &self.config.baselines {
            let rows = self.baselines(&model, &aes, b)?;
            self.write(BASELINES_CSV, "rectify", &rows)?;
        }
        Ok((records, times))
    }

    fn baselines(&self, model: &Model, aes: &[StoredAe], spec: &BaselineSpec) -> Result<Vec<BaselineRecord>> {
        let chosen: Vec<&StoredAe> = aes
            .iter()
            .filter(|a| a.target_rank.is_none() && (spec.attacks.is_empty() || spec.attacks.contains(&a.method)))
            .collect();
        let bounds = Bounds::default();
        let seed = self.config.seed;
        let mut rows = Vec::new();
        let mut run = |name: &str, param: f64, f: &(dyn Fn(&StoredAe) -> Result<usize> + Sync)| -> Result<()> {
            let labels: Vec<usize> = chosen.par_iter().map(|a| f(a)).collect::<Result<_>>()?;
            rows.extend(chosen.iter().zip(labels).map(|(a, label)| BaselineRecord {
                sample_id: a.sample_id,
                attack_method: a.method,
                baseline: name.to_string(),
                param,
                label,
            }));
            Ok(())
        };
        for &p in &spec.rsv_p {
            run("RSV", p, &|a| {
                let s = attacks::sample_seed(seed, a.sample_id as u64);
                Ok(rsv_rectify(model, &a.adv, p, spec.rsv_k, s, bounds)?.label)
            })?;
        }
        for &sigma in &spec.blur_sigma {
            run("BLUR", sigma, &|a| model.predict(&gaussian_blur(&a.adv, sigma)?))?;
        }
        for &f in &spec.pixel_fraction {
            run("PIXEL", f, &|a| {
                let s = attacks::sample_seed(seed, a.sample_id as u64);
                model.predict(&random_pixel_replacement(&a.adv, f, s, bounds)?)
            })?;
        }
        Ok(rows)
    }

    /// Calibrates the cost detector on training samples, then scores
    /// benign test samples and the untargeted adversarial examples, and
    /// runs each through the detector and rectifier pipeline.
    pub fn detect(&self) -> Result<Vec<VerdictRecord>> {
        let spec = self.config.detector.as_ref().ok_or_else(|| Error::Config("no [detector] section".into()))?;
        let model = self.load_model()?;
        let (train, test) = self.datasets()?;
        let det = spec.config(model.input_len(), self.config.seed);
        let rectifier = spec.rectifier.config();

        let correct = |d: &Dataset, n: usize| -> Result<Vec<(usize, Tensor)>> {
            scan_pool(d, n, |_, x, y| Ok((model.predict(x)? == y).then(|| x.clone())))
        };
        let calib_set = correct(&train, spec.calibration_size)?;
        let calib_inputs: Vec<Tensor> = calib_set.iter().map(|(_, x)| x.clone()).collect();
        let calib = calibrate(&model, &calib_inputs, &det)?;
        fs::create_dir_all(&self.out)?;
        calib.save(self.path(CALIBRATION_TXT))?;

        let knn_spec =
            self.config.attack_spec(spec.knn_attack).cloned().unwrap_or_else(|| AttackSpec::new(spec.knn_attack));
        let knn_cfg = knn_spec.config(model.input_len(), self.config.seed, None);
        let knn_aes: Vec<Tensor> = calib_set
            .par_iter()
            .map(|(i, x)| {
                let y = model.predict(x)?;
                let o = attempt(run_for_sample(&model, x, y, &knn_cfg, *i as u64, None))?;
                Ok(o.filter(|o| o.success).map(|o| o.adv))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let ae_costs = defense::costs_for(&model, &knn_aes, &det.attack)?;
        let mut training: Vec<(usize, bool)> = calib.benign_costs.iter().map(|&c| (c, false)).collect();
        training.extend(ae_costs.iter().map(|&c| (c, true)));
        let knn_rows: Vec<KnnRecord> = training.iter().map(|&(cost, is_ae)| KnnRecord { cost, is_ae }).collect();
        self.write(KNN_TRAINING_CSV, "detect", &knn_rows)?;

        let mut inputs: Vec<(usize, Option<AttackMethod>, Tensor)> =
            correct(&test, spec.eval_size)?.into_iter().map(|(i, x)| (i, None, x)).collect();
        let mut per_attack: HashMap<AttackMethod, usize> = HashMap::new();
        for ae in self.stored()?.into_iter().filter(|a| a.target_rank.is_none()) {
            let n = per_attack.entry(ae.method).or_default();
            if *n < spec.eval_size {
                *n += 1;
                inputs.push((ae.sample_id, Some(ae.method), ae.adv));
            }
        }
        let verdicts: Vec<VerdictRecord> = inputs
            .par_iter()
            .map(|(i, method, x)| {
                let mut d = det.clone();
                // benign and adversarial versions of one sample get distinct seeds
                let salt = method.map_or(0, |m| m as u64 + 1);
                d.attack.seed = attacks::sample_seed(det.attack.seed ^ salt, *i as u64);
                let out = defend(&model, x, &calib, &d, &rectifier)?;
                let knn = detect_knn(&calib, out.cost, &training)?;
                Ok(VerdictRecord {
                    sample_id: *i,
                    attack_method: *method,
                    cost: out.cost,
                    z_score: out.z_score,
                    is_ae: out.detected,
                    knn_is_ae: knn.is_ae,
                    defended_label: out.label,
                })
            })
            .collect::<Result<_>>()?;
        self.write(VERDICTS_CSV, "detect", &verdicts)?;
        Ok(verdicts)
    }

    /// Joins stage outputs with true labels and aggregates them.
    pub fn eval(&self) -> Result<Evaluation> {
        let (_, test) = self.datasets()?;
        let dataset = self.dataset_name().to_string();
        let truth = |i: usize| -> Result<usize> {
            if i >= test.len() {
                return Err(Error::Consistency(format!("sample {i} is outside the test split")));
            }
            Ok(test.sample(i).1)
        };

        let rectified: Vec<RectifyRecord> = read_csv(self.path(RECTIFY_CSV))?;
        let samples = rectified
            .iter()
            .map(|r| {
                Ok(SampleRecord {
                    key: ReportKey::new(&dataset, r.attack_method.name(), r.reattack_method.name(), r.target_rank),
                    true_label: truth(r.sample_id)?,
                    rectified_label: r.rectified_label,
                    l2_delta: r.l2_delta,
                    l2_delta_prime: r.l2_delta_prime,
                    cos_sim: r.cos_sim,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let report = ExperimentReport::build(&samples)?;
        fs::create_dir_all(&self.out)?;
        report.write_csv(fs::File::create(self.path(REPORT_CSV))?, &self.comments("eval"))?;

        let mut baselines = Vec::new();
        if self.path(BASELINES_CSV).exists() {
            let rows: Vec<BaselineRecord> = read_csv(self.path(BASELINES_CSV))?;
            let mut groups: Vec<((AttackMethod, String, u64), Vec<bool>)> = Vec::new();
            for r in &rows {
                let key = (r.attack_method, r.baseline.clone(), r.param.to_bits());
                let hit = r.label == truth(r.sample_id)?;
                match groups.iter_mut().find(|g| g.0 == key) {
                    Some(g) => g.1.push(hit),
                    None => groups.push((key, vec![hit])),
                }
            }
            for ((attack, baseline, param), hits) in groups {
                baselines.push(BaselineReportRow {
                    dataset: dataset.clone(),
                    attack,
                    baseline,
                    param: f64::from_bits(param),
                    n: hits.len(),
                    success_rate: fraction(hits)?,
                });
            }
            self.write(BASELINE_REPORT_CSV, "eval", &baselines)?;
        }

        let mut detection = Vec::new();
        if self.path(VERDICTS_CSV).exists() {
            let verdicts: Vec<VerdictRecord> = read_csv(self.path(VERDICTS_CSV))?;
            detection = detection_rows(&dataset, &verdicts, Some(&truth))?;
            self.write(DETECTION_CSV, "eval", &detection)?;
        }
        Ok(Evaluation { report, baselines, detection })
    }

    /// FGSM rectification of every stored example at each sweep radius.
    pub fn sweep(&self) -> Result<Vec<SweepRow>> {
        let model = self.load_model()?;
        let aes = self.stored()?;
        let attacks: Vec<AttackRecord> = read_csv(self.path(ATTACKS_CSV))?;
        let truth: HashMap<(AttackMethod, Option<usize>, usize), usize> =
            attacks.iter().map(|a| ((a.method, a.target_rank, a.sample_id), a.orig_label)).collect();
        let mut cells: Vec<(AttackMethod, Option<usize>)> = Vec::new();
        for a in &aes {
            if !cells.contains(&(a.method, a.target_rank)) {
                cells.push((a.method, a.target_rank));
            }
        }
        let base = self.config.fgsm_rectifier().config();
        let mut rows = Vec::new();
        for &(method, rank) in &cells {
            let pool: Vec<&StoredAe> = aes.iter().filter(|a| a.method == method && a.target_rank == rank).collect();
            for &eps in &self.config.sweep.epsilons {
                let cfg = RectifyConfig { epsilon: eps, ..base.clone() };
                let outs: Vec<(bool, bool)> = pool
                    .par_iter()
                    .map(|a| {
                        let y = truth.get(&(method, rank, a.sample_id)).ok_or_else(|| {
                            Error::Consistency(format!("sample {} of {method} missing from attacks.csv", a.sample_id))
                        })?;
                        let out = rectify_or_stay(&model, &a.adv, &cfg)?;
                        Ok((out.new_label == *y, out.flipped))
                    })
                    .collect::<Result<_>>()?;
                rows.push(SweepRow {
                    dataset: self.dataset_name().to_string(),
                    attack: method,
                    targeted_rank: rank,
                    epsilon: eps,
                    n: outs.len(),
                    success_rate: fraction(outs.iter().map(|o| o.0))?,
                    flip_rate: fraction(outs.iter().map(|o| o.1))?,
                });
            }
        }
        self.write(SWEEP_CSV, "sweep", &rows)?;
        Ok(rows)
    }
}

/// Per-attack detector summary. Without `truth` the pipeline columns are
/// NaN.
pub fn detection_rows(
    dataset: &str,
    verdicts: &[VerdictRecord],
    truth: Option<&dyn Fn(usize) -> Result<usize>>,
) -> Result<Vec<DetectionRow>> {
    let benign: Vec<&VerdictRecord> = verdicts.iter().filter(|v| v.attack_method.is_none()).collect();
    let benign_costs: Vec<f64> = benign.iter().map(|v| v.cost as f64).collect();
    let correct = |v: &VerdictRecord| -> Result<bool> {
        match truth {
            Some(t) => Ok(v.defended_label == t(v.sample_id)?),
            None => Ok(false),
        }
    };
    let benign_pipeline = match truth {
        Some(_) => fraction(benign.iter().map(|v| correct(v)).collect::<Result<Vec<_>>>()?)?,
        None => f64::NAN,
    };
    let mut by_attack: BTreeMap<AttackMethod, Vec<&VerdictRecord>> = BTreeMap::new();
    for v in verdicts {
        if let Some(m) = v.attack_method {
            by_attack.entry(m).or_default().push(v);
        }
    }
    let mut rows = Vec::new();
    for (attack, group) in by_attack {
        let costs: Vec<f64> = group.iter().map(|v| v.cost as f64).collect();
        rows.push(DetectionRow {
            dataset: dataset.to_string(),
            attack,
            n: group.len(),
            ae_accuracy: fraction(group.iter().map(|v| v.is_ae))?,
            ae_accuracy_knn: fraction(group.iter().map(|v| v.knn_is_ae))?,
            benign_n: benign.len(),
            benign_accuracy: fraction(benign.iter().map(|v| !v.is_ae))?,
            benign_accuracy_knn: fraction(benign.iter().map(|v| !v.knn_is_ae))?,
            mean_cost_ae: mean(&costs)?,
            mean_cost_benign: mean(&benign_costs)?,
            mann_whitney_p: mann_whitney_less(&costs, &benign_costs),
            pipeline_accuracy: match truth {
                Some(_) => fraction(group.iter().map(|v| correct(v)).collect::<Result<Vec<_>>>()?)?,
                None => f64::NAN,
            },
            benign_pipeline_accuracy: benign_pipeline,
        });
    }
    Ok(rows)
}

/// Reads `calibration.txt` from `dir`, checking it against the detector.
pub fn load_calibration(dir: &Path, spec: &DetectorSpec, input_len: usize, seed: u64) -> Result<CostCalibration> {
    CostCalibration::load(dir.join(CALIBRATION_TXT), &spec.config(input_len, seed))
}

/// Runs `f` on a pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    let pool = b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn idx_file(root: &Path, stem: &str) -> PathBuf {
    let gz = root.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        root.join(stem)
    }
}

fn split_thirds(d: Dataset) -> Result<(Dataset, Dataset)> {
    let (mut tr, mut te) = ((vec![], vec![]), (vec![], vec![]));
    for (i, (x, y)) in d.iter().enumerate() {
        // a hash of the index, so interleaved class orders still split evenly
        let side = if attacks::sample_seed(0, i as u64).is_multiple_of(3) { &mut te } else { &mut tr };
        side.0.push(x.clone());
        side.1.push(y);
    }
    Ok((Dataset::new(d.name(), tr.0, tr.1)?, Dataset::new(d.name(), te.0, te.1)?))
}

// Attack failures that only disqualify the sample.
fn attempt(r: Result<AttackOutcome>) -> Result<Option<AttackOutcome>> {
    match r {
        Ok(o) => Ok(Some(o)),
        Err(Error::InitFailure { .. } | Error::DegenerateGradient) => Ok(None),
        Err(e) => Err(e),
    }
}

// A degenerate DeepFool re-attack leaves the input where it is.
fn rectify_or_stay(model: &Model, xa: &Tensor, cfg: &RectifyConfig) -> Result<RectifyOutcome> {
    match rectify(model, xa, cfg) {
        Err(Error::DegenerateGradient) => {
            let y = model.predict(xa)?;
            Ok(RectifyOutcome {
                rectified: xa.clone(),
                delta_prime: Tensor::zeros(xa.shape().to_vec()),
                start_label: y,
                new_label: y,
                flipped: false,
                iterations: 0,
            })
        }
        r => r,
    }
}

fn attack_record(i: usize, method: AttackMethod, rank: Option<usize>, o: &AttackOutcome) -> AttackRecord {
    AttackRecord {
        sample_id: i,
        method,
        targeted: rank.is_some(),
        target_rank: rank,
        success: o.success,
        iterations: o.iterations,
        queries: o.queries,
        l2_delta: o.delta.l2_norm(),
        linf_delta: o.delta.linf_norm(),
        orig_label: o.orig_label,
        adv_label: o.adv_label,
    }
}
