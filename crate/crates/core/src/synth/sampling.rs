use ndarray::Array1;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{derived_rng, Result, SignMode, Stream, SynthConfig, SynthError};
use crate::model::{
    binary_margin, dataset_margin, synthesize, BinaryLabel, Dictionary, LinearClassifier, ModelStack, SparseCode,
    Synthesis,
};

/// Default acceptance rate below which sampling gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Draws between two acceptance checks.
pub const PROBE_BATCH: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingStats {
    pub drawn: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
}

impl SamplingStats {
    fn new(drawn: usize, accepted: usize) -> Self {
        Self { drawn, accepted, acceptance_rate: accepted as f64 / drawn.max(1) as f64 }
    }
}

/// Unit-norm random direction with zero bias.
pub fn random_classifier(config: &SynthConfig) -> Result<LinearClassifier> {
    let mut rng = derived_rng(config.seed, Stream::Classifier);
    let mut w: Array1<f64> = Array1::from_shape_simple_fn(config.m, || rng.sample(StandardNormal));
    let norm = w.dot(&w).sqrt();
    w /= norm;
    let clf = LinearClassifier::new(w, 0.0)?;
    assert!((clf.weight_norm() - 1.0).abs() < 1e-12 && clf.bias() == 0.0);
    Ok(clf)
}

/// Draws one code with `k` nonzeros on a uniform support.
pub(crate) fn draw_code(config: &SynthConfig, len: usize, rng: &mut ChaCha8Rng) -> Result<SparseCode> {
    let [lo, hi] = config.amp_range;
    let amp = Uniform::new_inclusive(lo, hi).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let support = sample(rng, len, config.k).into_vec();
    let values: Vec<f64> = support
        .iter()
        .map(|_| {
            let a = rng.sample(amp);
            match config.sign_mode {
                SignMode::Positive => a,
                SignMode::RandomSign if rng.random_bool(0.5) => -a,
                SignMode::RandomSign => a,
            }
        })
        .collect();
    Ok(SparseCode::from_support(len, &support, &values)?)
}

/// One labeled sample of a single-layer experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub code: SparseCode,
    pub signal: Array1<f64>,
    pub label: BinaryLabel,
    /// `y·wᵀΓ`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub stats: SamplingStats,
}

impl LabeledDataset {
    /// Smallest margin over the dataset.
    pub fn margin_star(&self) -> f64 {
        dataset_margin(self.samples.iter().map(|s| s.margin)).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of positive labels.
    pub fn positive_fraction(&self) -> f64 {
        let pos = self.samples.iter().filter(|s| s.label == BinaryLabel::Positive).count();
        pos as f64 / self.len().max(1) as f64
    }
}

/// Rejection sampling of `n_signals` codes whose score clears the margin
/// floor. Labels are the sign of the score, so every sample is classified
/// correctly by `clf` with margin at least `margin_floor`.
pub fn sample_codes(config: &SynthConfig, d: &Dictionary, clf: &LinearClassifier) -> Result<LabeledDataset> {
    config.validate()?;
    if clf.dim() != d.cols() || config.m != d.cols() {
        return Err(SynthError::InvalidConfig(format!(
            "dictionary has {} atoms, classifier {} weights, config M = {}",
            d.cols(),
            clf.dim(),
            config.m
        )));
    }
    let mut rng = derived_rng(config.seed, Stream::Codes);
    let mut samples = Vec::with_capacity(config.n_signals);
    let mut drawn = 0;
    while samples.len() < config.n_signals {
        let code = draw_code(config, d.cols(), &mut rng)?;
        drawn += 1;
        let score = clf.score(code.values());
        if score.abs() >= config.margin_floor {
            let label = BinaryLabel::from_score(score);
            let margin = binary_margin(&code, clf, label)?;
            debug_assert!(margin >= config.margin_floor && code.l0() == config.k);
            samples.push(Sample { signal: d.synthesis(code.values()), code, label, margin });
        }
        check_acceptance(drawn, samples.len(), config.min_acceptance, Vec::new)?;
    }
    let stats = SamplingStats::new(drawn, samples.len());
    Ok(LabeledDataset { samples, stats })
}

fn check_acceptance(
    drawn: usize,
    accepted: usize,
    threshold: f64,
    histogram: impl FnOnce() -> Vec<usize>,
) -> Result<()> {
    if drawn.is_multiple_of(PROBE_BATCH) && (accepted as f64) < threshold * drawn as f64 {
        return Err(SynthError::LowAcceptance {
            drawn,
            accepted,
            threshold,
            violations_per_layer: histogram(),
        });
    }
    Ok(())
}

/// One labeled multi-layer sample.
#[derive(Debug, Clone)]
pub struct LayeredSample {
    pub synthesis: Synthesis,
    pub label: BinaryLabel,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct MlcscDataset {
    pub samples: Vec<LayeredSample>,
    pub stats: SamplingStats,
    /// Rejections caused by each layer's `ℓ₀,∞` budget (index 0 is layer 1).
    /// A draw that breaks several budgets counts once per layer.
    pub violations_per_layer: Vec<usize>,
    /// Rejections caused by the margin floor alone.
    pub margin_rejections: usize,
}

/// Samples deepest codes with `config.k` nonzeros, synthesizes every layer
/// and keeps draws that respect all budgets and clear the margin floor.
pub fn sample_mlcsc(stack: &ModelStack, config: &SynthConfig, clf: &LinearClassifier) -> Result<MlcscDataset> {
    config.validate()?;
    if clf.dim() != stack.code_dim() {
        return Err(SynthError::InvalidConfig(format!(
            "classifier has {} weights, deepest code has length {}",
            clf.dim(),
            stack.code_dim()
        )));
    }
    if config.k > stack.code_dim() {
        return Err(SynthError::InvalidConfig(format!("k = {} exceeds the deepest code length", config.k)));
    }
    let mut rng = derived_rng(config.seed, Stream::Codes);
    let mut samples = Vec::with_capacity(config.n_signals);
    let mut histogram = vec![0usize; stack.depth()];
    let mut margin_rejections = 0;
    let mut drawn = 0;
    while samples.len() < config.n_signals {
        let code = draw_code(config, stack.code_dim(), &mut rng)?;
        drawn += 1;
        let synthesis = synthesize(stack, &code)?;
        let score = clf.score(code.values());
        if !synthesis.within_budget() {
            for v in &synthesis.violations {
                histogram[v.layer - 1] += 1;
            }
        } else if score.abs() < config.margin_floor {
            margin_rejections += 1;
        } else {
            let label = BinaryLabel::from_score(score);
            let margin = binary_margin(&code, clf, label)?;
            samples.push(LayeredSample { synthesis, label, margin });
        }
        check_acceptance(drawn, samples.len(), config.min_acceptance, || histogram.clone())?;
    }
    let stats = SamplingStats::new(drawn, samples.len());
    Ok(MlcscDataset { samples, stats, violations_per_layer: histogram, margin_rejections })
}
