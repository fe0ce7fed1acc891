use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::bp::{solve, BpSchedule, SolveStatus, Unfolding};
use super::threshold::{shrink, ThresholdSchedule};
use super::{PursuitError, Result};
use crate::model::argmax;
use crate::model::{BinaryLabel, Dictionary, LinearClassifier, ModelError, ModelStack, MultiClassifier, SparseCode};

/// What a layer needs to be differentiated with respect to its input.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerTape {
    /// Analysis coefficients before shrinkage.
    Threshold { pre_activation: Array1<f64>, beta: f64, nonneg: bool },
    Basis(Unfolding),
}

impl LayerTape {
    /// Maps `∂ℓ/∂Γ̂_i` to `∂ℓ/∂Γ̂_{i−1}`. The shrinkage derivative is 1 strictly
    /// inside the active region and 0 elsewhere, including the kink.
    pub fn backward(&self, d: &Dictionary, grad_out: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Self::Threshold {
                pre_activation,
                beta,
                nonneg,
            } => {
                let masked = Array1::from_shape_fn(grad_out.len(), |j| {
                    if shrink(pre_activation[j], *beta, *nonneg) != 0.0 {
                        grad_out[j]
                    } else {
                        0.0
                    }
                });
                d.synthesis(masked.view())
            }
            Self::Basis(unfolding) => unfolding.backward(d, grad_out),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub code: SparseCode,
    /// `‖D_i Γ̂_i − Γ̂_{i−1}‖₂`
    pub residual: f64,
    pub iterations: usize,
    /// Solver outcome; `None` for thresholding layers.
    pub status: Option<SolveStatus>,
    pub kkt_residual: Option<f64>,
    pub tape: Option<LayerTape>,
}

/// Output of a layered pursuit: one entry per layer, deepest last.
#[derive(Debug, Clone)]
pub struct PursuitTrace {
    pub pipeline: &'static str,
    pub layers: Vec<LayerTrace>,
}

impl PursuitTrace {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn deepest(&self) -> &SparseCode {
        &self.layers[self.layers.len() - 1].code
    }

    /// True unless some basis-pursuit layer hit its iteration cap.
    pub fn converged(&self) -> bool {
        self.layers.iter().all(|l| l.status != Some(SolveStatus::MaxIterations))
    }

    pub fn report(&self, prediction: Option<&Prediction>) -> TraceReport {
        TraceReport {
            pipeline: self.pipeline.to_string(),
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| LayerReport {
                    layer: i + 1,
                    support_size: l.code.l0(),
                    residual: l.residual,
                    iterations: l.iterations,
                    status: l.status,
                    kkt_residual: l.kkt_residual,
                })
                .collect(),
            prediction: prediction.cloned(),
        }
    }
}

/// JSON form of a [`PursuitTrace`].
///
/// ```json
/// {
///   "pipeline": "BP",
///   "layers": [
///     {"layer": 1, "support_size": 4, "residual": 0.12, "iterations": 87,
///      "status": "converged", "kkt_residual": 3.1e-9}
///   ],
///   "prediction": {"kind": "binary", "label": "positive", "score": 1.7}
/// }
/// ```
///
/// `status` and `kkt_residual` are `null` for thresholding layers, and
/// `prediction` is `null` when the trace was not classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub pipeline: String,
    pub layers: Vec<LayerReport>,
    pub prediction: Option<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub support_size: usize,
    pub residual: f64,
    pub iterations: usize,
    pub status: Option<SolveStatus>,
    pub kkt_residual: Option<f64>,
}

fn check_depth(stack: &ModelStack, depth: usize, y: ArrayView1<f64>) -> Result<()> {
    if depth != stack.depth() {
        return Err(PursuitError::InvalidSchedule(format!(
            "schedule has {depth} layers but the stack has {}",
            stack.depth()
        )));
    }
    if y.len() != stack.signal_dim() {
        return Err(ModelError::DimensionMismatch {
            context: "signal length vs first layer rows",
            expected: stack.signal_dim(),
            found: y.len(),
        }
        .into());
    }
    Ok(())
}

fn residual(d: &Dictionary, code: &SparseCode, input: ArrayView1<f64>) -> f64 {
    let r = d.synthesis(code.values()) - input;
    r.dot(&r).sqrt()
}

pub(crate) fn run_thr(
    y: ArrayView1<f64>,
    stack: &ModelStack,
    schedule: &ThresholdSchedule,
    nonneg: bool,
    record: bool,
) -> Result<PursuitTrace> {
    check_depth(stack, schedule.depth(), y)?;
    let mut input = y.to_owned();
    let mut layers = Vec::with_capacity(stack.depth());
    for (d, &beta) in stack.layers().iter().zip(schedule.betas()) {
        let pre = d.analysis(input.view());
        let code = SparseCode::from_dense(pre.mapv(|x| shrink(x, beta, nonneg)));
        let res = residual(d, &code, input.view());
        input = code.values().to_owned();
        layers.push(LayerTrace {
            code,
            residual: res,
            iterations: 1,
            status: None,
            kkt_residual: None,
            tape: record.then_some(LayerTape::Threshold {
                pre_activation: pre,
                beta,
                nonneg,
            }),
        });
    }
    Ok(PursuitTrace { pipeline: "THR", layers })
}

pub(crate) fn run_bp(y: ArrayView1<f64>, stack: &ModelStack, schedule: &BpSchedule, record: bool) -> Result<PursuitTrace> {
    check_depth(stack, schedule.depth(), y)?;
    let mut input = y.to_owned();
    let mut layers = Vec::with_capacity(stack.depth());
    for (d, &xi) in stack.layers().iter().zip(schedule.xis()) {
        let sol = solve(input.view(), d, xi, schedule.solver(), record)?;
        let res = residual(d, &sol.code, input.view());
        input = sol.code.values().to_owned();
        layers.push(LayerTrace {
            code: sol.code,
            residual: res,
            iterations: sol.iterations,
            status: Some(sol.status),
            kkt_residual: Some(sol.kkt_residual),
            tape: sol.tape.map(LayerTape::Basis),
        });
    }
    Ok(PursuitTrace { pipeline: "BP", layers })
}

/// `Γ̂_i = S_{β_i}(D_iᵀ Γ̂_{i−1})` with `Γ̂_0 = y`.
pub fn layered_thr(y: ArrayView1<f64>, stack: &ModelStack, schedule: &ThresholdSchedule, nonneg: bool) -> Result<PursuitTrace> {
    run_thr(y, stack, schedule, nonneg, false)
}

/// Basis pursuit applied layer by layer with `Γ̂_0 = y`. Layers that hit the
/// iteration cap are reported through their status, not as errors.
pub fn layered_bp(y: ArrayView1<f64>, stack: &ModelStack, schedule: &BpSchedule) -> Result<PursuitTrace> {
    run_bp(y, stack, schedule, false)
}

/// An encoder together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Pipeline {
    Thr {
        schedule: ThresholdSchedule,
        #[serde(default)]
        nonneg: bool,
    },
    Bp {
        schedule: BpSchedule,
    },
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Thr { .. } => "THR",
            Self::Bp { .. } => "BP",
        }
    }

    pub fn run(&self, y: ArrayView1<f64>, stack: &ModelStack) -> Result<PursuitTrace> {
        self.run_inner(y, stack, false)
    }

    /// As [`Pipeline::run`], keeping per-layer tapes for backprop.
    pub fn run_recorded(&self, y: ArrayView1<f64>, stack: &ModelStack) -> Result<PursuitTrace> {
        self.run_inner(y, stack, true)
    }

    fn run_inner(&self, y: ArrayView1<f64>, stack: &ModelStack, record: bool) -> Result<PursuitTrace> {
        match self {
            Self::Thr { schedule, nonneg } => run_thr(y, stack, schedule, *nonneg, record),
            Self::Bp { schedule } => run_bp(y, stack, schedule, record),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Binary(LinearClassifier),
    Multi(MultiClassifier),
}

impl Classifier {
    pub fn dim(&self) -> usize {
        match self {
            Self::Binary(c) => c.dim(),
            Self::Multi(c) => c.dim(),
        }
    }
}

impl From<LinearClassifier> for Classifier {
    fn from(c: LinearClassifier) -> Self {
        Self::Binary(c)
    }
}

impl From<MultiClassifier> for Classifier {
    fn from(c: MultiClassifier) -> Self {
        Self::Multi(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prediction {
    Binary { label: BinaryLabel, score: f64 },
    Multi { class: usize, scores: Vec<f64> },
}

impl Prediction {
    pub fn binary_label(&self) -> Option<BinaryLabel> {
        match self {
            Self::Binary { label, .. } => Some(*label),
            Self::Multi { .. } => None,
        }
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            Self::Multi { class, .. } => Some(*class),
            Self::Binary { .. } => None,
        }
    }
}

/// Applies the classifier to the deepest code. A binary score of exactly zero
/// is labelled positive; multi-class ties go to the lowest class index.
pub fn classify(trace: &PursuitTrace, clf: &Classifier) -> Result<Prediction> {
    let code = trace.deepest();
    if code.len() != clf.dim() {
        return Err(ModelError::DimensionMismatch {
            context: "deepest code length vs classifier",
            expected: clf.dim(),
            found: code.len(),
        }
        .into());
    }
    Ok(match clf {
        Classifier::Binary(c) => {
            let score = c.score(code.values());
            Prediction::Binary {
                label: BinaryLabel::from_score(score),
                score,
            }
        }
        Classifier::Multi(c) => {
            let scores = c.scores(code.values());
            Prediction::Multi {
                class: argmax(scores.view()),
                scores: scores.to_vec(),
            }
        }
    })
}
