//! Sparse-coding classifiers with certified adversarial robustness.
//!
//! The crate covers the single- and multi-layer convolutional sparse model
//! ([`model`]), thresholding and basis-pursuit encoders ([`pursuit`]),
//! closed-form robustness certificates ([`bounds`]), gradient attacks against
//! the encoder + linear classifier pipelines ([`attack`]), synthetic data
//! generation ([`synth`]) and the experiment runner behind the
//! `sparse-shield` binary ([`cli`]).

pub mod model;
pub mod pursuit;
pub mod bounds;
pub mod synth;
pub mod attack;
pub mod cli;
