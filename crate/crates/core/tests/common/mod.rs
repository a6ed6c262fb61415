#![allow(dead_code)]

use advrect::nn::{Layer, Model};
use advrect::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max |a - b| / max |b|`, with the scale floored at 1e-8.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(1e-8f64, |m, v| m.max(v.abs()));
    analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// A small random dense or conv network with random biases, and a random
/// input in [0, 1].
pub fn random_case(seed: u64) -> (Model, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..=5);
    let (shape, layers) = if seed.is_multiple_of(2) {
        let inputs = rng.random_range(2..=8);
        let mut layers = Vec::new();
        let mut width = inputs;
        for _ in 0..rng.random_range(0..=2) {
            let h = rng.random_range(3..=8);
            layers.push(Layer::Dense { inputs: width, outputs: h });
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Dense { inputs: width, outputs: classes });
        (vec![inputs], layers)
    } else {
        let c = rng.random_range(1..=2);
        let side = rng.random_range(6..=8);
        let out = rng.random_range(2..=3);
        let pooled = (side - 2) / 2;
        (
            vec![c, side, side],
            vec![
                Layer::Conv2d { in_channels: c, out_channels: out },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Flatten,
                Layer::Dense { inputs: out * pooled * pooled, outputs: classes },
            ],
        )
    };
    // nonzero biases keep pre-activations off the relu kink at exactly 0
    let mut params = Model::new(shape.clone(), layers.clone(), rng.random()).unwrap().params().to_vec();
    for p in params.iter_mut().flatten() {
        p.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let model = Model::with_params(shape.clone(), layers, params).unwrap();
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape, (0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
    (model, x)
}

fn at(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
}

/// Worst relative error of the loss gradient (for every label) and of every
/// logit Jacobian row against central differences.
pub fn worst_gradient_error(model: &Model, x: &Tensor) -> f64 {
    let shape = x.shape().to_vec();
    let mut worst = 0.0f64;
    for y in 0..model.num_classes() {
        let g = model.loss_input_grad(x, y).unwrap();
        let num = central_diff(x.data(), FD_STEP, |v| model.loss_input_grad(&at(&shape, v), y).unwrap().loss);
        worst = worst.max(rel_err(g.input_grad.data(), &num));
    }
    let jac = model.logit_jacobian(x).unwrap();
    for (k, row) in jac.rows.iter().enumerate() {
        let num = central_diff(x.data(), FD_STEP, |v| model.forward(&at(&shape, v)).unwrap().data()[k]);
        worst = worst.max(rel_err(row.data(), &num));
    }
    worst
}
