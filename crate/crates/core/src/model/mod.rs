//! Core types of the (multi-layer) convolutional sparse model: dictionaries,
//! sparse codes, model stacks, linear classifiers, the structural norms used by
//! the robustness certificates, and the mutual coherence.

mod classifier;
mod code;
mod dictionary;
pub mod io;
mod norms;
mod stack;

pub(crate) use classifier::argmax;
pub use classifier::{
    binary_margin, dataset_margin, multiclass_margin, BinaryLabel, LinearClassifier,
    MultiClassifier,
};
pub use code::SparseCode;
pub use dictionary::{
    mutual_coherence, srip_lower_bound_mc, srip_surrogate, Coherence, ConvMeta, Dictionary,
    NORMALIZATION_TOL,
};
pub use norms::{
    patch_l0inf, patch_l2inf, stripe_l0inf, stripe_l0inf_with_window, window_max_nonzeros,
};
pub use stack::{synthesize, BudgetViolation, ModelStack, Synthesis};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("atom {column} has norm {norm}, expected 1 (tolerance {NORMALIZATION_TOL:e})")]
    NotNormalized { column: usize, norm: f64 },
    #[error("atom {0} is zero and cannot be normalized")]
    ZeroAtom(usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid convolutional layout: {0}")]
    InvalidConvolution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
