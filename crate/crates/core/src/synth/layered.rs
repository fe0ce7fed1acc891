use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    derived_rng, random_classifier, random_dictionary, sample_mlcsc, DictionaryStats, MlcscDataset, Result,
    SamplingStats, Stream, SynthConfig, SynthError, MANIFEST_FILE,
};
use crate::model::io::{save_matrix, save_stack};
use crate::model::{dataset_margin, mutual_coherence, Dictionary, LinearClassifier, ModelStack};

/// Shape of a multi-layer model. Layer 1 is the `N × M` dictionary of the
/// [`SynthConfig`]; layer `i + 2` has `atoms[i]` columns. `budgets` holds one
/// `ℓ₀,∞` budget per layer, first layer first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub atoms: Vec<usize>,
    pub budgets: Vec<usize>,
}

impl StackSpec {
    pub fn depth(&self) -> usize {
        self.atoms.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.budgets.len() != self.depth() {
            return Err(SynthError::InvalidConfig(format!(
                "{} budgets given for {} layers",
                self.budgets.len(),
                self.depth()
            )));
        }
        if let Some(a) = self.atoms.iter().find(|&&a| a < 2) {
            return Err(SynthError::InvalidConfig(format!("deeper layers need at least 2 atoms, got {a}")));
        }
        Ok(())
    }
}

/// Builds the stack: the configured first layer followed by normalized
/// Gaussian layers, each from its own stream.
pub fn random_stack(config: &SynthConfig, spec: &StackSpec) -> Result<(ModelStack, Vec<f64>, DictionaryStats)> {
    spec.validate()?;
    let (first, stats) = random_dictionary(config)?;
    let mut mus = vec![stats.mu];
    let mut layers = vec![first];
    let mut rows = config.m;
    for (i, &cols) in spec.atoms.iter().enumerate() {
        let mut rng = derived_rng(config.seed, Stream::Layer(i as u64 + 2));
        let raw = Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal));
        let d = Dictionary::normalized(raw)?;
        mus.push(mutual_coherence(&d).value);
        layers.push(d);
        rows = cols;
    }
    Ok((ModelStack::new(layers, spec.budgets.clone())?, mus, stats))
}

/// A multi-layer experiment. `config.M` is the width of the first layer and
/// `config.k` the number of nonzeros of the deepest code.
#[derive(Debug, Clone)]
pub struct LayeredProblem {
    pub config: SynthConfig,
    pub spec: StackSpec,
    pub stack: ModelStack,
    /// Coherence per layer.
    pub mus: Vec<f64>,
    pub first_layer_stats: DictionaryStats,
    pub classifier: LinearClassifier,
    pub data: MlcscDataset,
}

impl LayeredProblem {
    pub fn generate(config: &SynthConfig, spec: &StackSpec) -> Result<Self> {
        config.validate()?;
        let (stack, mus, first_layer_stats) = random_stack(config, spec)?;
        // the classifier acts on the deepest code
        let clf_config = SynthConfig { m: stack.code_dim(), ..config.clone() };
        let classifier = random_classifier(&clf_config)?;
        let data = sample_mlcsc(&stack, config, &classifier)?;
        Ok(Self { config: config.clone(), spec: spec.clone(), stack, mus, first_layer_stats, classifier, data })
    }

    pub fn margin_star(&self) -> f64 {
        dataset_margin(self.data.samples.iter().map(|s| s.margin)).unwrap_or(0.0)
    }

    pub fn manifest(&self) -> LayeredManifest {
        LayeredManifest {
            config: self.config.clone(),
            stack: self.spec.clone(),
            mu_per_layer: self.mus.clone(),
            initial_mu: self.first_layer_stats.initial_mu,
            reduction_rounds: self.first_layer_stats.rounds,
            margin_star: self.margin_star(),
            sampling: self.data.stats,
            violations_per_layer: self.data.violations_per_layer.clone(),
            margin_rejections: self.data.margin_rejections,
        }
    }

    /// Writes `stack.stack`, `classifier.mat`, `codes.mat` (deepest codes),
    /// `signals.mat`, `labels.mat` and the manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_stack(&dir.join("stack.stack"), &self.stack)?;
        save_matrix(&dir.join("classifier.mat"), &self.classifier.weights().to_owned().insert_axis(Axis(0)))?;
        let stack_rows = |rows: Vec<Array1<f64>>| -> Result<Array2<f64>> {
            let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
            ndarray::stack(Axis(0), &views).map_err(|e| SynthError::Format(e.to_string()))
        };
        let samples = &self.data.samples;
        let deepest = samples.iter().map(|s| s.synthesis.codes.last().map(|c| c.values().to_owned()).unwrap_or_default());
        save_matrix(&dir.join("codes.mat"), &stack_rows(deepest.collect())?)?;
        save_matrix(&dir.join("signals.mat"), &stack_rows(samples.iter().map(|s| s.synthesis.signal.clone()).collect())?)?;
        let labels = samples.iter().map(|s| Array1::from_elem(1, s.label.sign())).collect();
        save_matrix(&dir.join("labels.mat"), &stack_rows(labels)?)?;
        let mut json = serde_json::to_string_pretty(&self.manifest())?;
        json.push('\n');
        fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredManifest {
    pub config: SynthConfig,
    pub stack: StackSpec,
    pub mu_per_layer: Vec<f64>,
    pub initial_mu: f64,
    pub reduction_rounds: usize,
    pub margin_star: f64,
    pub sampling: SamplingStats,
    pub violations_per_layer: Vec<usize>,
    pub margin_rejections: usize,
}
