//! Micro differentiable classifier.
//!
//! A [`Model`] is an ordered stack of [`Layer`]s with a hand-written
//! backward pass. Every gradient the attacks need is a vector-Jacobian
//! product of the logits: the cross-entropy input gradient uses the
//! weights `softmax - onehot`, row `k` of the logit Jacobian uses the unit
//! vector `e_k`.
//!
//! Conventions: ReLU has subgradient 0 at 0, max-pool routes its gradient
//! to the first maximal element in row-major scan order, and [`Model::predict`]
//! breaks ties toward the lowest class index.

mod persist;
mod train;

pub use persist::{load_model, read_model, save_model, write_model, MODEL_MAGIC};
pub use train::{train_model, EpochStats, TrainConfig, TrainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{softmax, Tensor};

/// Layer descriptor. Convolutions are 3x3, stride 1, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize },
    MaxPool2,
    Relu,
    Flatten,
}

const KERNEL: usize = 3;

impl Layer {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |what: &str| Error::Consistency(format!("{self:?} cannot take input {input:?}: {what}"));
        match *self {
            Layer::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(bad("dense layers take a flat vector of matching length"));
                }
                Ok(vec![outputs])
            }
            Layer::Conv2d { in_channels, out_channels } => match input {
                [c, h, w] if *c == in_channels && *h >= KERNEL && *w >= KERNEL => {
                    Ok(vec![out_channels, h - KERNEL + 1, w - KERNEL + 1])
                }
                _ => Err(bad("expected (channels, height, width) of at least 3x3")),
            },
            Layer::MaxPool2 => match input {
                [c, h, w] if *h >= 2 && *w >= 2 => Ok(vec![*c, h / 2, w / 2]),
                _ => Err(bad("expected (channels, height, width) of at least 2x2")),
            },
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn param_counts(&self) -> Option<(usize, usize)> {
        match *self {
            Layer::Dense { inputs, outputs } => Some((inputs * outputs, outputs)),
            Layer::Conv2d { in_channels, out_channels } => {
                Some((out_channels * in_channels * KERNEL * KERNEL, out_channels))
            }
            _ => None,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv2d { in_channels, .. } => in_channels * KERNEL * KERNEL,
            _ => 0,
        }
    }
}

/// Weights and bias of one parametric layer, flat row-major.
///
/// Dense weights are `(outputs, inputs)`; convolution weights are
/// `(out_channels, in_channels, 3, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        Self { weight: vec![0.0; self.weight.len()], bias: vec![0.0; self.bias.len()] }
    }
}

/// Per-layer parameter gradients, aligned with [`Model::layers`].
pub type ParamGrads = Vec<Option<LayerParams>>;

#[derive(Debug, Clone)]
pub struct GradResult {
    pub loss: f64,
    pub input_grad: Tensor,
    pub param_grads: Option<ParamGrads>,
}

/// Logits at a point together with their input gradients, one row per class.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub logits: Tensor,
    pub rows: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<Option<LayerParams>>,
    shapes: Vec<Vec<usize>>,
}

/// Activations recorded during a forward pass. `acts[i]` is the input of
/// layer `i`; the last entry holds the logits.
struct Trace {
    acts: Vec<Vec<f64>>,
    pool_routes: Vec<Vec<usize>>,
}

impl Model {
    /// Builds a model with He-uniform weights and zero biases drawn from `seed`.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        for layer in &layers {
            params.push(layer.param_counts().map(|(nw, nb)| {
                let bound = (6.0 / layer.fan_in() as f64).sqrt();
                LayerParams { weight: (0..nw).map(|_| rng.random_range(-bound..bound)).collect(), bias: vec![0.0; nb] }
            }));
        }
        Self::with_params(input_shape, layers, params)
    }

    pub fn with_params(input_shape: Vec<usize>, layers: Vec<Layer>, params: Vec<Option<LayerParams>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Consistency("a model needs at least one layer".into()));
        }
        if params.len() != layers.len() {
            return Err(Error::Consistency(format!("{} parameter slots for {} layers", params.len(), layers.len())));
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer.output_shape(&shapes[i])?;
            match (layer.param_counts(), &params[i]) {
                (None, None) => {}
                (Some((nw, nb)), Some(p)) if p.weight.len() == nw && p.bias.len() == nb => {
                    if p.weight.iter().chain(&p.bias).any(|v| !v.is_finite()) {
                        return Err(Error::Consistency(format!("layer {i} has non-finite parameters")));
                    }
                }
                _ => return Err(Error::Consistency(format!("layer {i} ({layer:?}) has mismatched parameters"))),
            }
            shapes.push(next);
        }
        let out = shapes.last().expect("non-empty");
        if out.len() != 1 || out[0] == 0 {
            return Err(Error::Consistency(format!("final layer must produce a non-empty logit vector, got {out:?}")));
        }
        Ok(Self { input_shape, layers, params, shapes })
    }

    /// Single dense layer `logits = W x + b` over flat inputs.
    pub fn linear(weights: &[Vec<f64>], bias: &[f64]) -> Result<Self> {
        let outputs = weights.len();
        let inputs = weights.first().map_or(0, Vec::len);
        if weights.iter().any(|r| r.len() != inputs) || bias.len() != outputs {
            return Err(Error::Consistency("ragged linear weights".into()));
        }
        Self::with_params(
            vec![inputs],
            vec![Layer::Dense { inputs, outputs }],
            vec![Some(LayerParams { weight: weights.concat(), bias: bias.to_vec() })],
        )
    }

    /// Small CNN used as the MNIST-scale victim:
    /// conv(8) relu pool conv(16) relu pool flatten dense(64) relu dense(classes).
    pub fn small_cnn(input_shape: [usize; 3], num_classes: usize, seed: u64) -> Result<Self> {
        let [c, h, w] = input_shape;
        let h2 = (h - 2) / 2;
        let w2 = (w - 2) / 2;
        let flat = 16 * ((h2 - 2) / 2) * ((w2 - 2) / 2);
        Self::new(
            input_shape.to_vec(),
            vec![
                Layer::Conv2d { in_channels: c, out_channels: 8 },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Conv2d { in_channels: 8, out_channels: 16 },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Flatten,
                Layer::Dense { inputs: flat, outputs: 64 },
                Layer::Relu,
                Layer::Dense { inputs: 64, outputs: num_classes },
            ],
            seed,
        )
    }

    /// Fully connected relu network over flat inputs.
    pub fn mlp(inputs: usize, hidden: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(Layer::Dense { inputs: width, outputs: h });
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Dense { inputs: width, outputs: num_classes });
        Self::new(vec![inputs], layers, seed)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().expect("non-empty")[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch { expected: self.input_shape.clone(), got: x.shape().to_vec() });
        }
        Ok(())
    }

    fn check_class(&self, y: usize) -> Result<()> {
        if y >= self.num_classes() {
            return Err(Error::InvalidClass { class: y, num_classes: self.num_classes() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let logits = self.forward_raw(x.data());
        Ok(Tensor::from_parts(vec![logits.len()], logits))
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.forward(x)?.argmax())
    }

    pub fn probabilities(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(softmax(self.forward(x)?.data()))
    }

    /// Cross-entropy of `softmax(logits)` at class `y` and its input gradient.
    pub fn loss_input_grad(&self, x: &Tensor, y: usize) -> Result<GradResult> {
        self.loss_grad(x, y, false)
    }

    /// As [`Model::loss_input_grad`], also returning parameter gradients.
    pub fn loss_full_grad(&self, x: &Tensor, y: usize) -> Result<GradResult> {
        self.loss_grad(x, y, true)
    }

    fn loss_grad(&self, x: &Tensor, y: usize, with_params: bool) -> Result<GradResult> {
        self.check_input(x)?;
        self.check_class(y)?;
        let trace = self.trace(x.data());
        let logits = trace.acts.last().expect("logits");
        let (loss, dlogits) = cross_entropy(logits, y);
        let mut pg = with_params.then(|| self.zero_grads());
        let g = self.backward(&trace, dlogits, pg.as_mut());
        Ok(GradResult { loss, input_grad: x.with_data(g), param_grads: pg })
    }

    /// Row `k` is the input gradient of logit `k`.
    pub fn logit_jacobian(&self, x: &Tensor) -> Result<Jacobian> {
        self.check_input(x)?;
        let trace = self.trace(x.data());
        let logits = trace.acts.last().expect("logits").clone();
        let rows = (0..logits.len())
            .map(|k| {
                let mut e = vec![0.0; logits.len()];
                e[k] = 1.0;
                x.with_data(self.backward(&trace, e, None))
            })
            .collect();
        Ok(Jacobian { logits: Tensor::from_parts(vec![logits.len()], logits), rows })
    }

    /// Logits and the input gradient of `sum_k weights[k] * logit_k`.
    pub fn logit_vjp(&self, x: &Tensor, weights: &[f64]) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        if weights.len() != self.num_classes() {
            return Err(Error::ShapeMismatch { expected: vec![self.num_classes()], got: vec![weights.len()] });
        }
        let trace = self.trace(x.data());
        let logits = trace.acts.last().expect("logits").clone();
        let g = self.backward(&trace, weights.to_vec(), None);
        Ok((Tensor::from_parts(vec![logits.len()], logits), x.with_data(g)))
    }

    pub(crate) fn zero_grads(&self) -> ParamGrads {
        self.params.iter().map(|p| p.as_ref().map(LayerParams::zeros_like)).collect()
    }

    fn forward_raw(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = self.apply(i, layer, &cur, None);
        }
        cur
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_routes = vec![Vec::new(); self.layers.len()];
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = self.apply(i, layer, &acts[i], Some(&mut pool_routes[i]));
            acts.push(next);
        }
        Trace { acts, pool_routes }
    }

    fn apply(&self, i: usize, layer: &Layer, input: &[f64], routes: Option<&mut Vec<usize>>) -> Vec<f64> {
        let in_shape = &self.shapes[i];
        let out_shape = &self.shapes[i + 1];
        match *layer {
            Layer::Dense { inputs, outputs } => {
                let p = self.params[i].as_ref().expect("dense params");
                (0..outputs)
                    .map(|o| {
                        let row = &p.weight[o * inputs..(o + 1) * inputs];
                        p.bias[o] + row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>()
                    })
                    .collect()
            }
            Layer::Conv2d { in_channels, out_channels } => {
                let p = self.params[i].as_ref().expect("conv params");
                conv_forward(input, in_shape, out_shape, in_channels, out_channels, p)
            }
            Layer::MaxPool2 => {
                let (out, r) = pool_forward(input, in_shape, out_shape);
                if let Some(routes) = routes {
                    *routes = r;
                }
                out
            }
            Layer::Relu => input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Layer::Flatten => input.to_vec(),
        }
    }

    fn backward(&self, trace: &Trace, mut grad: Vec<f64>, mut pg: Option<&mut ParamGrads>) -> Vec<f64> {
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[i];
            grad = match *layer {
                Layer::Dense { inputs, outputs } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    if let Some(pg) = pg.as_deref_mut() {
                        let g = pg[i].as_mut().expect("dense grads");
                        for (o, &go) in grad.iter().enumerate().take(outputs) {
                            g.bias[o] += go;
                            if go != 0.0 {
                                let row = &mut g.weight[o * inputs..(o + 1) * inputs];
                                for (w, v) in row.iter_mut().zip(input) {
                                    *w += go * v;
                                }
                            }
                        }
                    }
                    let mut gin = vec![0.0; inputs];
                    for (o, &go) in grad.iter().enumerate().take(outputs) {
                        if go == 0.0 {
                            continue;
                        }
                        let row = &p.weight[o * inputs..(o + 1) * inputs];
                        for (gi, w) in gin.iter_mut().zip(row) {
                            *gi += go * w;
                        }
                    }
                    gin
                }
                Layer::Conv2d { in_channels, out_channels } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let g = pg.as_deref_mut().map(|pg| pg[i].as_mut().expect("conv grads"));
                    conv_backward(input, &grad, &self.shapes[i], &self.shapes[i + 1], in_channels, out_channels, p, g)
                }
                Layer::MaxPool2 => {
                    let mut gin = vec![0.0; input.len()];
                    for (o, &src) in trace.pool_routes[i].iter().enumerate() {
                        gin[src] += grad[o];
                    }
                    gin
                }
                Layer::Relu => grad.iter().zip(input).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 }).collect(),
                Layer::Flatten => grad,
            };
        }
        grad
    }
}

/// Loss and `d loss / d logits` for softmax cross-entropy.
pub(crate) fn cross_entropy(logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let loss = (lse - logits[y]).max(0.0);
    let mut d = softmax(logits);
    d[y] -= 1.0;
    (loss, d)
}

fn conv_forward(
    input: &[f64],
    in_shape: &[usize],
    out_shape: &[usize],
    cin: usize,
    cout: usize,
    p: &LayerParams,
) -> Vec<f64> {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = p.bias[o]);
        for c in 0..cin {
            let src = &input[c * h * w..(c + 1) * h * w];
            let k = &p.weight[(o * cin + c) * 9..(o * cin + c + 1) * 9];
            for ki in 0..KERNEL {
                for kj in 0..KERNEL {
                    let wv = k[ki * KERNEL + kj];
                    for r in 0..oh {
                        let srow = &src[(r + ki) * w + kj..(r + ki) * w + kj + ow];
                        let drow = &mut plane[r * ow..(r + 1) * ow];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    grad: &[f64],
    in_shape: &[usize],
    out_shape: &[usize],
    cin: usize,
    cout: usize,
    p: &LayerParams,
    mut pg: Option<&mut LayerParams>,
) -> Vec<f64> {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut gin = vec![0.0; input.len()];
    for o in 0..cout {
        let gplane = &grad[o * oh * ow..(o + 1) * oh * ow];
        if let Some(g) = pg.as_deref_mut() {
            g.bias[o] += gplane.iter().sum::<f64>();
        }
        for c in 0..cin {
            let src = &input[c * h * w..(c + 1) * h * w];
            let dst = &mut gin[c * h * w..(c + 1) * h * w];
            let base = (o * cin + c) * 9;
            for ki in 0..KERNEL {
                for kj in 0..KERNEL {
                    let wv = p.weight[base + ki * KERNEL + kj];
                    let mut gw = 0.0;
                    for r in 0..oh {
                        let off = (r + ki) * w + kj;
                        let grow = &gplane[r * ow..(r + 1) * ow];
                        let drow = &mut dst[off..off + ow];
                        for (d, g) in drow.iter_mut().zip(grow) {
                            *d += wv * g;
                        }
                        if pg.is_some() {
                            let srow = &src[off..off + ow];
                            gw += srow.iter().zip(grow).map(|(s, g)| s * g).sum::<f64>();
                        }
                    }
                    if let Some(g) = pg.as_deref_mut() {
                        g.weight[base + ki * KERNEL + kj] += gw;
                    }
                }
            }
        }
    }
    gin
}

fn pool_forward(input: &[f64], in_shape: &[usize], out_shape: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut routes = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for r in 0..oh {
            for col in 0..ow {
                let mut best = ch * h * w + 2 * r * w + 2 * col;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * r + dr) * w + 2 * col + dc;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                routes.push(best);
            }
        }
    }
    (out, routes)
}

/// Class with the `rank`-th largest logit (rank 1 is the prediction).
/// Ties rank the lower index first.
pub fn class_at_rank(logits: &[f64], rank: usize) -> Result<usize> {
    if rank == 0 || rank > logits.len() {
        return Err(Error::RankOutOfRange { rank, num_classes: logits.len() });
    }
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    Ok(order[rank - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> Model {
        Model::linear(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn canonical_forward_matches_matrix_product() {
        let m = canonical();
        let x = Tensor::from_vec(vec![0.3, 0.5]).unwrap();
        let z = m.forward(&x).unwrap();
        assert_eq!(z.data(), &[0.3, -0.3]);
        assert_eq!(m.predict(&x).unwrap(), 0);
    }

    #[test]
    fn symmetric_weights_give_symmetric_logits_at_zero() {
        let m = Model::linear(&[vec![2.0, -1.0], vec![-2.0, 1.0], vec![0.5, 0.5]], &[0.0; 3]).unwrap();
        let z = m.forward(&Tensor::zeros(vec![2])).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0, 0.0]);
        assert_eq!(m.predict(&Tensor::zeros(vec![2])).unwrap(), 0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = canonical();
        let err = m.forward(&Tensor::zeros(vec![3])).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        assert!(matches!(
            m.loss_input_grad(&Tensor::zeros(vec![2]), 2),
            Err(Error::InvalidClass { class: 2, num_classes: 2 })
        ));
    }

    #[test]
    fn canonical_loss_gradient_closed_form() {
        let m = canonical();
        let x = Tensor::from_vec(vec![0.3, 0.5]).unwrap();
        let g = m.loss_input_grad(&x, 0).unwrap();
        let e = (-0.6f64).exp();
        let expected = -2.0 * e / (1.0 + e);
        assert!((g.input_grad.data()[0] - expected).abs() < 1e-15);
        assert!((expected + 0.7086).abs() < 1e-4);
        assert_eq!(g.input_grad.data()[1], 0.0);
        assert!((g.loss - (1.0 + e).ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_give_log_k_loss() {
        let m = Model::linear(&vec![vec![0.0, 0.0]; 4], &[0.7; 4]).unwrap();
        let g = m.loss_input_grad(&Tensor::from_vec(vec![0.2, 0.9]).unwrap(), 3).unwrap();
        assert!((g.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn canonical_jacobian_rows() {
        let m = canonical();
        let j = m.logit_jacobian(&Tensor::from_vec(vec![0.3, 0.5]).unwrap()).unwrap();
        assert_eq!(j.rows[0].data(), &[1.0, 0.0]);
        assert_eq!(j.rows[1].data(), &[-1.0, 0.0]);
    }

    #[test]
    fn pool_routes_to_first_maximum() {
        let input = [1.0, 1.0, 1.0, 1.0];
        let (out, routes) = pool_forward(&input, &[1, 2, 2], &[1, 1, 1]);
        assert_eq!(out, vec![1.0]);
        assert_eq!(routes, vec![0]);
        let (_, routes) = pool_forward(&[0.0, 2.0, 2.0, 1.0], &[1, 2, 2], &[1, 1, 1]);
        assert_eq!(routes, vec![1]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        // hidden pre-activation exactly 0 at x = 0
        let m = Model::with_params(
            vec![1],
            vec![Layer::Dense { inputs: 1, outputs: 1 }, Layer::Relu, Layer::Dense { inputs: 1, outputs: 2 }],
            vec![
                Some(LayerParams { weight: vec![1.0], bias: vec![0.0] }),
                None,
                Some(LayerParams { weight: vec![1.0, -1.0], bias: vec![0.0, 0.0] }),
            ],
        )
        .unwrap();
        let j = m.logit_jacobian(&Tensor::zeros(vec![1])).unwrap();
        assert_eq!(j.rows[0].data(), &[0.0]);
    }

    #[test]
    fn rank_selection() {
        assert_eq!(class_at_rank(&[5.0, 1.0, 3.0], 2).unwrap(), 2);
        assert_eq!(class_at_rank(&[5.0, 1.0, 3.0], 1).unwrap(), 0);
        assert_eq!(class_at_rank(&[2.0, 2.0, 1.0], 1).unwrap(), 0);
        assert_eq!(class_at_rank(&[2.0, 2.0, 1.0], 2).unwrap(), 1);
        assert!(class_at_rank(&[1.0, 2.0], 3).is_err());
        assert!(class_at_rank(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn cnn_shapes() {
        let m = Model::small_cnn([1, 28, 28], 10, 0).unwrap();
        assert_eq!(m.num_classes(), 10);
        let z = m.forward(&Tensor::zeros(vec![1, 28, 28])).unwrap();
        assert_eq!(z.len(), 10);
    }

    #[test]
    fn with_params_rejects_wrong_sizes() {
        let err = Model::with_params(
            vec![2],
            vec![Layer::Dense { inputs: 2, outputs: 2 }],
            vec![Some(LayerParams { weight: vec![0.0; 3], bias: vec![0.0; 2] })],
        );
        assert!(err.is_err());
    }
}
