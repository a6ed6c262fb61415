//! Rectifying adversarial examples by attacking them again.
//!
//! A detected adversarial example sits just across a decision boundary from
//! its true class. A small untargeted white-box re-attack from that point
//! tends to cross straight back, recovering the original label without
//! knowing it. This crate contains the re-attack rectifier, the attacks used
//! to produce adversarial examples, a re-attack-cost detector, baselines, and
//! the metrics and experiment plumbing around them.

pub mod attacks;
pub mod data;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod rectifier;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
