//! Access levels to a victim classifier.
//!
//! Attacks and defenses are written against the narrowest interface they
//! need. Decision-based code sees only [`Classifier`], score-based code adds
//! logits through [`ScoreModel`], white-box attacks use [`WhiteBox`]. The
//! rectifier is bound to [`Rectifiable`], which exposes prediction, the loss
//! gradient and the logit Jacobian and nothing that could carry a true label.

use std::cell::Cell;

use crate::error::Result;
use crate::nn::{GradResult, Jacobian, Model};
use crate::tensor::Tensor;

pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn predict(&self, x: &Tensor) -> Result<usize>;
}

pub trait ScoreModel: Classifier {
    fn logits(&self, x: &Tensor) -> Result<Tensor>;
}

pub trait WhiteBox: ScoreModel {
    fn loss_input_grad(&self, x: &Tensor, y: usize) -> Result<GradResult>;
    fn logit_jacobian(&self, x: &Tensor) -> Result<Jacobian>;
    /// Logits and the input gradient of `sum_k weights[k] * logit_k`.
    fn logit_vjp(&self, x: &Tensor, weights: &[f64]) -> Result<(Tensor, Tensor)>;
}

pub trait Rectifiable {
    fn num_classes(&self) -> usize;
    fn predict(&self, x: &Tensor) -> Result<usize>;
    fn loss_input_grad(&self, x: &Tensor, y: usize) -> Result<GradResult>;
    fn logit_jacobian(&self, x: &Tensor) -> Result<Jacobian>;
}

impl<T: WhiteBox + ?Sized> Rectifiable for T {
    fn num_classes(&self) -> usize {
        Classifier::num_classes(self)
    }
    fn predict(&self, x: &Tensor) -> Result<usize> {
        Classifier::predict(self, x)
    }
    fn loss_input_grad(&self, x: &Tensor, y: usize) -> Result<GradResult> {
        WhiteBox::loss_input_grad(self, x, y)
    }
    fn logit_jacobian(&self, x: &Tensor) -> Result<Jacobian> {
        WhiteBox::logit_jacobian(self, x)
    }
}

impl Classifier for Model {
    fn num_classes(&self) -> usize {
        Model::num_classes(self)
    }
    fn predict(&self, x: &Tensor) -> Result<usize> {
        Model::predict(self, x)
    }
}

impl ScoreModel for Model {
    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }
}

impl WhiteBox for Model {
    fn loss_input_grad(&self, x: &Tensor, y: usize) -> Result<GradResult> {
        Model::loss_input_grad(self, x, y)
    }
    fn logit_jacobian(&self, x: &Tensor) -> Result<Jacobian> {
        Model::logit_jacobian(self, x)
    }
    fn logit_vjp(&self, x: &Tensor, weights: &[f64]) -> Result<(Tensor, Tensor)> {
        Model::logit_vjp(self, x, weights)
    }
}

/// Counts model evaluations made through it.
pub struct QueryCounter<'a, M: ?Sized> {
    inner: &'a M,
    queries: Cell<usize>,
}

impl<'a, M: ?Sized> QueryCounter<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self { inner, queries: Cell::new(0) }
    }

    pub fn queries(&self) -> usize {
        self.queries.get()
    }

    fn bump(&self) {
        self.queries.set(self.queries.get() + 1);
    }
}

impl<M: Classifier + ?Sized> Classifier for QueryCounter<'_, M> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
    fn predict(&self, x: &Tensor) -> Result<usize> {
        self.bump();
        self.inner.predict(x)
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for QueryCounter<'_, M> {
    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.bump();
        self.inner.logits(x)
    }
}
