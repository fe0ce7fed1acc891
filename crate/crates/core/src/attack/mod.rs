//! One-step gradient attacks on encoder + classifier pipelines.
//!
//! The gradient of the classification loss with respect to the input signal
//! is computed analytically: thresholding layers pass gradients through their
//! active coordinates and basis-pursuit layers replay the recorded proximal
//! iterations in reverse.

mod gradient;
mod sweep;

pub use gradient::{loss_and_grad, pipeline_gradient, Loss, PipelineGradient, Target};
pub use sweep::{
    accuracy_sweep, read_sweep_csv, trend_violations, write_sweep_csv, SweepItem, SweepOptions, SweepRow,
    SweepStats, TREND_TOLERANCE,
};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;
use crate::pursuit::PursuitError;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Pursuit(#[from] PursuitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AttackError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AttackKind {
    /// `E = ε·sign(∇)`, so `‖E‖_∞ ≤ ε`.
    #[serde(rename = "FGSM-linf")]
    FgsmLinf,
    /// `E = ε·∇/‖∇‖₂`, so `‖E‖₂ = ε`.
    #[default]
    #[serde(rename = "GradAscent-l2")]
    GradAscentL2,
}

impl AttackKind {
    /// Norm that bounds the perturbation, as written to sweep tables.
    pub fn norm_kind(self) -> &'static str {
        match self {
            Self::FgsmLinf => "linf",
            Self::GradAscentL2 => "l2",
        }
    }

    /// Largest `‖E‖₂` a perturbation of budget `eps` can have in dimension
    /// `n`: `√n·ε` for sign attacks, `ε` otherwise.
    pub fn l2_budget(self, eps: f64, n: usize) -> f64 {
        match self {
            Self::FgsmLinf => (n as f64).sqrt() * eps,
            Self::GradAscentL2 => eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub epsilon: f64,
    #[serde(default)]
    pub loss: Loss,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, epsilon: f64, loss: Loss) -> Result<Self> {
        let spec = Self { kind, epsilon, loss };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(AttackError::InvalidSpec(format!("epsilon must be finite and ≥ 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Relative slack on the norm-budget assertions.
const BUDGET_SLACK: f64 = 1e-12;

/// Moves `x` by at most `spec.epsilon` along the loss gradient. `sign(0) = 0`
/// in sign mode; a zero gradient leaves `x` unchanged and logs a warning.
pub fn perturb(x: ArrayView1<f64>, grad: ArrayView1<f64>, spec: &AttackSpec) -> Result<Array1<f64>> {
    spec.validate()?;
    if x.len() != grad.len() {
        return Err(ModelError::DimensionMismatch { context: "gradient vs signal", expected: x.len(), found: grad.len() }.into());
    }
    let eps = spec.epsilon;
    let norm = grad.dot(&grad).sqrt();
    if norm == 0.0 {
        if eps > 0.0 {
            log::warn!("zero gradient: signal left unperturbed");
        }
        return Ok(x.to_owned());
    }
    let step = match spec.kind {
        AttackKind::FgsmLinf => grad.mapv(|g| if g == 0.0 { 0.0 } else { eps * g.signum() }),
        AttackKind::GradAscentL2 => grad.mapv(|g| eps * g / norm),
    };
    let out = &x + &step;
    let moved = &out - &x;
    match spec.kind {
        AttackKind::FgsmLinf => {
            let linf = moved.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(linf <= eps * (1.0 + BUDGET_SLACK) + f64::EPSILON * x_scale(x), "ℓ∞ budget exceeded: {linf} > {eps}");
        }
        AttackKind::GradAscentL2 => {
            let l2 = moved.dot(&moved).sqrt();
            let tol = 1e-9 * eps + 4.0 * f64::EPSILON * x_scale(x) * (x.len() as f64).sqrt();
            assert!((l2 - eps).abs() <= tol, "ℓ2 budget missed: {l2} vs {eps}");
        }
    }
    Ok(out)
}

/// Rounding scale of `x + e − x`.
fn x_scale(x: ArrayView1<f64>) -> f64 {
    x.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}
