//! Synthetic on-model data: random dictionaries with controlled coherence,
//! margin-filtered labeled sparse codes and verified multi-layer instances.
//!
//! Every random quantity comes from a ChaCha8 stream derived from the master
//! seed and a fixed stream id, so the dictionary, classifier and codes do not
//! shift when one of the others changes shape.

mod config;
mod dataset;
mod dictionary;
mod layered;
mod sampling;

pub use config::{DictMode, SignMode, SynthConfig};
pub use dataset::{Manifest, SyntheticProblem, MANIFEST_FILE};
pub use layered::{random_stack, LayeredManifest, LayeredProblem, StackSpec};
pub use dictionary::{random_dictionary, reduce_coherence, DictionaryStats, REDUCTION_FACTOR, REDUCTION_ROUNDS};
pub use sampling::{
    random_classifier, sample_codes, sample_mlcsc, LabeledDataset, LayeredSample, MlcscDataset, Sample,
    SamplingStats, MIN_ACCEPTANCE, PROBE_BATCH,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(
        "acceptance rate {accepted}/{drawn} is below {threshold:e}; budget violations per layer: {violations_per_layer:?}"
    )]
    LowAcceptance {
        drawn: usize,
        accepted: usize,
        threshold: f64,
        violations_per_layer: Vec<usize>,
    },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Stream ids under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dictionary,
    Classifier,
    Codes,
    /// Dictionary of layer `i` (1-based) of a multi-layer model, `i ≥ 2`.
    Layer(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Self::Dictionary => 1,
            Self::Classifier => 2,
            Self::Codes => 3,
            Self::Layer(i) => 16 + i,
        }
    }
}

/// Independent generator for `stream` under `seed`.
pub fn derived_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
