//! Datasets: MNIST IDX files, synthetic blobs and moons, and evaluation pools.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::attacks::{self, AttackConfig};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable overriding the dataset cache directory.
pub const DATA_DIR_ENV: &str = "ADVRECT_DATA";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Consistency(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        if let Some(i) = inputs.iter().position(|x| x.data().iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(Error::Consistency(format!("input {i} has values outside [0, 1]")));
        }
        Ok(Self { name: name.into(), inputs, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&Tensor, usize) {
        (&self.inputs[i], self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tensor, usize)> {
        self.inputs.iter().zip(self.labels.iter().copied())
    }

    /// First `n` samples (or all of them if there are fewer).
    pub fn head(&self, n: usize) -> Dataset {
        self.slice(0, n.min(self.len()))
    }

    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        let start = start.min(end);
        Dataset {
            name: self.name.clone(),
            inputs: self.inputs[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Dataset cache directory: `$ADVRECT_DATA` if set, else `fallback`.
pub fn data_dir(fallback: impl Into<PathBuf>) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| fallback.into())
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let mut file = BufReader::new(file);
    let mut head = [0u8; 2];
    let n = file.read(&mut head)?;
    let prefix = std::io::Cursor::new(head[..n].to_vec());
    let joined = prefix.chain(file);
    if n == 2 && head == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(joined)))
    } else {
        Ok(Box::new(joined))
    }
}

fn read_be_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format(format!("truncated {what}")))?;
    Ok(u32::from_be_bytes(b))
}

/// Loads an IDX image/label file pair (plain or gzip-compressed).
///
/// Images become `(1, rows, cols)` tensors with pixels scaled by `1/255`.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let images = images.as_ref();
    let mut ir = open_maybe_gz(images)?;
    let magic = read_be_u32(&mut ir, "image header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            images.display()
        )));
    }
    let count = read_be_u32(&mut ir, "image header")? as usize;
    let rows = read_be_u32(&mut ir, "image header")? as usize;
    let cols = read_be_u32(&mut ir, "image header")? as usize;

    let labels_path = labels.as_ref();
    let mut lr = open_maybe_gz(labels_path)?;
    let lmagic = read_be_u32(&mut lr, "label header")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let lcount = read_be_u32(&mut lr, "label header")? as usize;
    if lcount != count {
        return Err(Error::Consistency(format!("{count} images but {lcount} labels")));
    }

    let mut pixels = vec![0u8; count * rows * cols];
    ir.read_exact(&mut pixels).map_err(|_| Error::Format("truncated image data".into()))?;
    let mut label_bytes = vec![0u8; count];
    lr.read_exact(&mut label_bytes).map_err(|_| Error::Format("truncated label data".into()))?;

    let inputs = pixels
        .chunks_exact((rows * cols).max(1))
        .take(count)
        .map(|img| Tensor::from_parts(vec![1, rows, cols], img.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect();
    let name = images.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(name, inputs, label_bytes.into_iter().map(usize::from).collect())
}

/// Writes an uncompressed IDX pair. Pixels are `round(255 * v)`.
pub fn write_idx(data: &Dataset, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let (rows, cols) = match data.inputs.first().map(Tensor::shape) {
        Some([1, r, c]) => (*r, *c),
        Some([r, c]) => (*r, *c),
        Some(s) => return Err(Error::Format(format!("cannot store shape {s:?} as IDX images"))),
        None => (0, 0),
    };
    let mut iw = BufWriter::new(File::create(images)?);
    for v in [IDX_IMAGES_MAGIC, data.len() as u32, rows as u32, cols as u32] {
        iw.write_all(&v.to_be_bytes())?;
    }
    for x in &data.inputs {
        let bytes: Vec<u8> = x.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        iw.write_all(&bytes)?;
    }
    iw.flush()?;
    let mut lw = BufWriter::new(File::create(labels)?);
    for v in [IDX_LABELS_MAGIC, data.len() as u32] {
        lw.write_all(&v.to_be_bytes())?;
    }
    let bytes: Vec<u8> = data.labels.iter().map(|&y| y as u8).collect();
    lw.write_all(&bytes)?;
    lw.flush()?;
    Ok(())
}

/// Gaussian blobs in `[0, 1]^dim`.
///
/// Class centres are drawn uniformly in `[0.2, 0.8]^dim`; the noise scale is
/// chosen so the closest pair of centres sits `separation` standard
/// deviations apart, and each noise vector is truncated to half that spacing
/// so classes never overlap. Samples are interleaved by class.
pub fn make_blobs(num_classes: usize, dim: usize, per_class: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if num_classes == 0 || dim == 0 || per_class == 0 || separation <= 0.0 {
        return Err(Error::Config("blob sizes and separation must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> =
        (0..num_classes).map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect()).collect();
    let mut min_dist = f64::INFINITY;
    for a in 0..num_classes {
        for b in a + 1..num_classes {
            let d = centres[a].iter().zip(&centres[b]).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            min_dist = min_dist.min(d);
        }
    }
    let sigma = if min_dist.is_finite() { min_dist / separation } else { 0.05 };
    let radius = 0.5 * separation * sigma;

    let mut inputs = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for _ in 0..per_class {
        for (c, centre) in centres.iter().enumerate() {
            let noise = loop {
                let n: Vec<f64> = (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
                if n.iter().map(|v| v * v).sum::<f64>().sqrt() < radius {
                    break n;
                }
            };
            let x = centre.iter().zip(&noise).map(|(m, e)| (m + e).clamp(0.0, 1.0)).collect();
            inputs.push(Tensor::from_parts(vec![dim], x));
            labels.push(c);
        }
    }
    Dataset::new("blobs", inputs, labels)
}

/// Two interleaving half circles rescaled into `[0, 1]^2`, shuffled.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || noise < 0.0 {
        return Err(Error::Config("moons need n > 0 and noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let mut points = Vec::with_capacity(n);
    let angle = |i: usize, m: usize| {
        if m > 1 {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        } else {
            0.0
        }
    };
    for i in 0..n_outer {
        let t = angle(i, n_outer);
        points.push((t.cos(), t.sin(), 0usize));
    }
    for i in 0..n_inner {
        let t = angle(i, n_inner);
        points.push((1.0 - t.cos(), 0.5 - t.sin(), 1usize));
    }
    points.shuffle(&mut rng);
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (x, y, c) in points {
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let px = ((x + noise * nx + 1.25) / 3.5).clamp(0.0, 1.0);
        let py = ((y + noise * ny + 0.75) / 2.5).clamp(0.0, 1.0);
        inputs.push(Tensor::from_parts(vec![2], vec![px, py]));
        labels.push(c);
    }
    Dataset::new("moons", inputs, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolSample {
    /// Position in the source dataset.
    pub index: usize,
    pub input: Tensor,
    pub label: usize,
}

/// Samples the victim classifies correctly (and, optionally, that an attack
/// flips), in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPool {
    pub samples: Vec<PoolSample>,
}

impl EvalPool {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Scans `dataset` in order and keeps the first `size` samples for which
/// `qualify` returns `Some`. Work is fanned out over the current rayon pool in
/// chunks; the result does not depend on the number of threads.
pub fn scan_pool<T, F>(dataset: &Dataset, size: usize, qualify: F) -> Result<Vec<(usize, T)>>
where
    T: Send,
    F: Fn(usize, &Tensor, usize) -> Result<Option<T>> + Sync,
{
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut kept = Vec::with_capacity(size);
    if size == 0 {
        return Ok(kept);
    }
    let chunk = (size - kept.len()).max(rayon::current_num_threads() * 4).max(8);
    let mut start = 0;
    while kept.len() < size && start < dataset.len() {
        let end = (start + chunk).min(dataset.len());
        let results: Vec<Result<Option<T>>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let (x, y) = dataset.sample(i);
                qualify(i, x, y)
            })
            .collect();
        for (i, r) in (start..end).zip(results) {
            if kept.len() == size {
                break;
            }
            if let Some(v) = r? {
                kept.push((i, v));
            }
        }
        start = end;
    }
    if kept.len() < size {
        return Err(Error::InsufficientPool { wanted: size, found: kept.len() });
    }
    Ok(kept)
}

/// Evaluation pool of the first `size` correctly classified samples; with an
/// attack configuration, only samples the attack flips qualify.
pub fn build_eval_pool(
    model: &Model,
    dataset: &Dataset,
    size: usize,
    attack: Option<&AttackConfig>,
) -> Result<EvalPool> {
    let kept = scan_pool(dataset, size, |i, x, y| {
        if model.predict(x)? != y {
            return Ok(None);
        }
        if let Some(cfg) = attack {
            let outcome = attacks::run_for_sample(model, x, y, cfg, i as u64, Some(dataset))?;
            if !outcome.success {
                return Ok(None);
            }
        }
        Ok(Some(()))
    })?;
    Ok(EvalPool {
        samples: kept
            .into_iter()
            .map(|(i, ())| {
                let (x, y) = dataset.sample(i);
                PoolSample { index: i, input: x.clone(), label: y }
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, bytes: &[u8]) {
        std::fs::write(path, bytes).unwrap();
    }

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn idx_pixels_scale_to_unit_interval() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let mut img = header(IDX_IMAGES_MAGIC, &[2, 2, 2]);
        img.extend_from_slice(&[0, 255, 128, 1, 255, 255, 0, 0]);
        write_raw(&ip, &img);
        let mut lab = header(IDX_LABELS_MAGIC, &[2]);
        lab.extend_from_slice(&[3, 7]);
        write_raw(&lp, &lab);
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.inputs()[0].shape(), &[1, 2, 2]);
        assert_eq!(d.inputs()[0].data()[1], 1.0);
        assert_eq!(d.inputs()[0].data()[0], 0.0);
        assert_eq!(d.labels(), &[3, 7]);
    }

    #[test]
    fn wrong_label_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let mut img = header(IDX_IMAGES_MAGIC, &[1, 1, 1]);
        img.push(9);
        write_raw(&ip, &img);
        let mut lab = header(0x0000_0802, &[1]);
        lab.push(0);
        write_raw(&lp, &lab);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format(_))));
    }

    #[test]
    fn count_mismatch_is_a_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let mut img = header(IDX_IMAGES_MAGIC, &[2, 1, 1]);
        img.extend_from_slice(&[1, 2]);
        write_raw(&ip, &img);
        let mut lab = header(IDX_LABELS_MAGIC, &[3]);
        lab.extend_from_slice(&[0, 1, 2]);
        write_raw(&lp, &lab);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));
    }

    #[test]
    fn mnist_header_shape() {
        // 60000x28x28 header; only the first image's bytes are needed to
        // check the header is parsed, so the count is reduced to match
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let mut img = header(IDX_IMAGES_MAGIC, &[3, 28, 28]);
        img.extend(std::iter::repeat_n(17u8, 3 * 784));
        write_raw(&ip, &img);
        let mut lab = header(IDX_LABELS_MAGIC, &[3]);
        lab.extend_from_slice(&[1, 2, 3]);
        write_raw(&lp, &lab);
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        assert!(d.inputs().iter().all(|x| x.shape() == [1, 28, 28]));
    }

    #[test]
    fn blobs_and_moons_are_deterministic() {
        assert_eq!(make_blobs(3, 4, 10, 5.0, 1).unwrap(), make_blobs(3, 4, 10, 5.0, 1).unwrap());
        assert_ne!(make_blobs(3, 4, 10, 5.0, 1).unwrap(), make_blobs(3, 4, 10, 5.0, 2).unwrap());
        assert_eq!(make_moons(50, 0.1, 3).unwrap(), make_moons(50, 0.1, 3).unwrap());
    }

    #[test]
    fn moons_are_balanced() {
        let d = make_moons(200, 0.05, 11).unwrap();
        assert_eq!(d.len(), 200);
        assert_eq!(d.labels().iter().filter(|&&y| y == 0).count(), 100);
        assert_eq!(d.labels().iter().filter(|&&y| y == 1).count(), 100);
    }

    #[test]
    fn synthetic_values_stay_in_unit_box() {
        let d = make_blobs(4, 3, 50, 2.0, 4).unwrap();
        assert!(d.inputs().iter().all(|x| x.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn pool_from_perfect_and_hopeless_models() {
        let d = make_blobs(2, 2, 20, 8.0, 3).unwrap();
        let mean = |c: usize| -> Vec<f64> {
            let xs: Vec<_> = d.iter().filter(|(_, y)| *y == c).map(|(x, _)| x.data()).collect();
            (0..2).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / xs.len() as f64).collect()
        };
        let (c0, c1) = (mean(0), mean(1));
        let w: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| a - b).collect();
        let mid: f64 = c0.iter().zip(&c1).zip(&w).map(|((a, b), w)| 0.5 * (a + b) * w).sum();
        let perfect = Model::linear(&[w.clone(), w.iter().map(|v| -v).collect()], &[-mid, mid]).unwrap();
        let acc = d.iter().filter(|(x, y)| perfect.predict(x).unwrap() == *y).count();
        assert_eq!(acc, d.len());
        let pool = build_eval_pool(&perfect, &d, 7, None).unwrap();
        assert_eq!(pool.samples.iter().map(|s| s.index).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());

        let hopeless = Model::linear(&[w.iter().map(|v| -v).collect(), w], &[mid, -mid]).unwrap();
        assert!(matches!(
            build_eval_pool(&hopeless, &d, 1, None),
            Err(Error::InsufficientPool { wanted: 1, found: 0 })
        ));
    }
}
