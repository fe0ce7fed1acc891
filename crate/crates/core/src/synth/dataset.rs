//! On-disk layout of a generated dataset. A dataset directory holds
//!
//! | file              | content                                        |
//! |-------------------|------------------------------------------------|
//! | `dictionary.dict` | the dictionary record                          |
//! | `classifier.mat`  | `1 × M` weights (the bias is 0)                |
//! | `codes.mat`       | `n × M`, one code per row                      |
//! | `signals.mat`     | `n × N`, one signal per row                    |
//! | `labels.mat`      | `n × 1`, entries `±1`                          |
//! | `manifest.json`   | [`Manifest`]                                   |

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{
    random_classifier, random_dictionary, sample_codes, DictionaryStats, LabeledDataset, Result, Sample,
    SamplingStats, SynthConfig, SynthError,
};
use crate::model::io::{load_dictionary, load_matrix, save_dictionary, save_matrix};
use crate::model::{binary_margin, BinaryLabel, Dictionary, LinearClassifier, SparseCode};

pub const MANIFEST_FILE: &str = "manifest.json";
const DICTIONARY_FILE: &str = "dictionary.dict";
const CLASSIFIER_FILE: &str = "classifier.mat";
const CODES_FILE: &str = "codes.mat";
const SIGNALS_FILE: &str = "signals.mat";
const LABELS_FILE: &str = "labels.mat";

/// A complete single-layer experiment: dictionary, classifier and data.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub config: SynthConfig,
    pub dictionary: Dictionary,
    pub dictionary_stats: DictionaryStats,
    pub classifier: LinearClassifier,
    pub data: LabeledDataset,
}

impl SyntheticProblem {
    /// Draws everything `config` describes; each part uses its own stream.
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let (dictionary, dictionary_stats) = random_dictionary(config)?;
        let classifier = random_classifier(config)?;
        let data = sample_codes(config, &dictionary, &classifier)?;
        Ok(Self { config: config.clone(), dictionary, dictionary_stats, classifier, data })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            config: self.config.clone(),
            mu: self.dictionary_stats.mu,
            initial_mu: self.dictionary_stats.initial_mu,
            reduction_rounds: self.dictionary_stats.rounds,
            margin_star: self.data.margin_star(),
            sampling: self.data.stats,
            positive_fraction: self.data.positive_fraction(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_dictionary(&dir.join(DICTIONARY_FILE), &self.dictionary)?;
        let w = self.classifier.weights().to_owned().insert_axis(Axis(0));
        save_matrix(&dir.join(CLASSIFIER_FILE), &w)?;
        let rows = |f: &dyn Fn(&Sample) -> Array1<f64>| -> Result<Array2<f64>> {
            let views: Vec<Array1<f64>> = self.data.samples.iter().map(f).collect();
            let views: Vec<_> = views.iter().map(|v| v.view()).collect();
            ndarray::stack(Axis(0), &views).map_err(|e| SynthError::Format(e.to_string()))
        };
        save_matrix(&dir.join(CODES_FILE), &rows(&|s| s.code.values().to_owned())?)?;
        save_matrix(&dir.join(SIGNALS_FILE), &rows(&|s| s.signal.clone())?)?;
        save_matrix(&dir.join(LABELS_FILE), &rows(&|s| Array1::from_elem(1, s.label.sign()))?)?;
        let mut json = serde_json::to_string_pretty(&self.manifest())?;
        json.push('\n');
        fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    /// Reads a dataset directory back. Margins are recomputed from the codes
    /// and must agree with the stored labels.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let dictionary = load_dictionary(&dir.join(DICTIONARY_FILE))?;
        let w = load_matrix(&dir.join(CLASSIFIER_FILE))?;
        if w.nrows() != 1 {
            return Err(SynthError::Format(format!("classifier must be a single row, found {}", w.nrows())));
        }
        let classifier = LinearClassifier::new(w.row(0).to_owned(), 0.0)?;
        let codes = load_matrix(&dir.join(CODES_FILE))?;
        let signals = load_matrix(&dir.join(SIGNALS_FILE))?;
        let labels = load_matrix(&dir.join(LABELS_FILE))?;
        let n = codes.nrows();
        if signals.nrows() != n || labels.nrows() != n || labels.ncols() != 1 {
            return Err(SynthError::Format("codes, signals and labels disagree on the sample count".into()));
        }
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let code = SparseCode::from_dense(codes.row(i).to_owned());
            let label = match labels[[i, 0]] {
                1.0 => BinaryLabel::Positive,
                -1.0 => BinaryLabel::Negative,
                v => return Err(SynthError::Format(format!("label {v} in row {i} is not ±1"))),
            };
            let margin = binary_margin(&code, &classifier, label)?;
            samples.push(Sample { code, signal: signals.row(i).to_owned(), label, margin });
        }
        let dictionary_stats = DictionaryStats {
            initial_mu: manifest.initial_mu,
            mu: manifest.mu,
            rounds: manifest.reduction_rounds,
        };
        let data = LabeledDataset { samples, stats: manifest.sampling };
        Ok(Self { config: manifest.config, dictionary, dictionary_stats, classifier, data })
    }
}

/// Summary written next to the dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SynthConfig,
    /// Mutual coherence of the stored dictionary.
    pub mu: f64,
    pub initial_mu: f64,
    pub reduction_rounds: usize,
    /// Smallest margin `O*` over the dataset.
    pub margin_star: f64,
    pub sampling: SamplingStats,
    pub positive_fraction: f64,
}
