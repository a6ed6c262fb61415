use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, ParamGrads};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Mini-batch Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5, batch_size: 32, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Trains `model` in place. Deterministic given `cfg.seed`.
pub fn train_model(
    model: &mut Model,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ds in std::iter::once(train).chain(test) {
        if let Some(&bad) = ds.labels().iter().find(|&&y| y >= model.num_classes()) {
            return Err(Error::InvalidClass { class: bad, num_classes: model.num_classes() });
        }
    }
    let batch = cfg.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut first = model.zero_grads();
    let mut second = model.zero_grads();
    let mut step = 0i32;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(batch) {
            let mut acc = model.zero_grads();
            for &i in chunk {
                let (x, y) = train.sample(i);
                let g = model.loss_full_grad(x, y)?;
                loss_sum += g.loss;
                // accuracy on the pre-update parameters of this batch
                if model.predict(x)? == y {
                    correct += 1;
                }
                add_into(&mut acc, g.param_grads.as_ref().expect("requested"));
            }
            if !loss_sum.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            step += 1;
            adam_step(model, &acc, chunk.len(), &mut first, &mut second, step, cfg);
        }
        let mean_loss = loss_sum / train.len() as f64;
        if !mean_loss.is_finite() || has_non_finite(model) {
            return Err(Error::TrainingDiverged { epoch });
        }
        epochs.push(EpochStats { epoch, mean_loss, train_accuracy: correct as f64 / train.len() as f64 });
    }

    Ok(TrainReport {
        epochs,
        train_accuracy: accuracy(model, train)?,
        test_accuracy: test.map(|t| accuracy(model, t)).transpose()?,
    })
}

pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0;
    for (x, y) in data.iter() {
        if model.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn add_into(acc: &mut ParamGrads, g: &ParamGrads) {
    for (a, g) in acc.iter_mut().zip(g) {
        if let (Some(a), Some(g)) = (a.as_mut(), g.as_ref()) {
            a.weight.iter_mut().zip(&g.weight).for_each(|(a, g)| *a += g);
            a.bias.iter_mut().zip(&g.bias).for_each(|(a, g)| *a += g);
        }
    }
}

fn adam_step(
    model: &mut Model,
    grads: &ParamGrads,
    batch: usize,
    first: &mut ParamGrads,
    second: &mut ParamGrads,
    step: i32,
    cfg: &TrainConfig,
) {
    const EPS: f64 = 1e-8;
    let scale = 1.0 / batch as f64;
    let c1 = 1.0 - cfg.beta1.powi(step);
    let c2 = 1.0 - cfg.beta2.powi(step);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            let gi = g[i] * scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            p[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
        }
    };
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        if let (Some(p), Some(g), Some(m), Some(v)) =
            (p.as_mut(), grads[i].as_ref(), first[i].as_mut(), second[i].as_mut())
        {
            update(&mut p.weight, &g.weight, &mut m.weight, &mut v.weight);
            update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
    }
}

fn has_non_finite(model: &Model) -> bool {
    model.params().iter().flatten().any(|p| p.weight.iter().chain(&p.bias).any(|v| !v.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let all = make_blobs(2, 2, 150, 6.0, 1).unwrap();
        let (train, test) = (all.slice(0, 200), all.slice(200, 300));
        let mut m = Model::mlp(2, &[], 2, 3).unwrap();
        let cfg = TrainConfig { epochs: 100, learning_rate: 0.1, ..Default::default() };
        let report = train_model(&mut m, &train, Some(&test), &cfg).unwrap();
        assert_eq!(report.test_accuracy, Some(1.0));
        assert_eq!(report.train_accuracy, 1.0);
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let train = make_blobs(3, 4, 30, 4.0, 9).unwrap();
        let cfg = TrainConfig { epochs: 3, seed: 5, ..Default::default() };
        let mut a = Model::mlp(4, &[8], 3, 1).unwrap();
        let mut b = Model::mlp(4, &[8], 3, 1).unwrap();
        train_model(&mut a, &train, None, &cfg).unwrap();
        train_model(&mut b, &train, None, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let empty = Dataset::new("empty", vec![], vec![]).unwrap();
        let mut m = Model::mlp(2, &[], 2, 0).unwrap();
        assert!(matches!(train_model(&mut m, &empty, None, &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn huge_learning_rate_is_reported_as_divergence() {
        let train = make_blobs(2, 2, 20, 6.0, 1).unwrap();
        let mut m = Model::mlp(2, &[4], 2, 0).unwrap();
        let cfg = TrainConfig { epochs: 50, learning_rate: f64::MAX, ..Default::default() };
        let r = train_model(&mut m, &train, None, &cfg);
        assert!(matches!(r, Err(Error::TrainingDiverged { .. })), "{r:?}");
    }
}
