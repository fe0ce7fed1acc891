//! Closed-form robustness certificates. Every evaluator returns a
//! [`BoundReport`]: the largest admissible perturbation energy together with
//! the intermediate quantities (sparsity ceilings, threshold windows, noise
//! chains) that produced it.
//!
//! All bounds are strict: classification is guaranteed for perturbations with
//! energy *below* `eps_max`.

mod csc;
mod layered;
mod single;

pub use csc::{thm5_binary, thm5_srip, thm7_multiclass};
pub use layered::{thm10_lthr, thm11_lbp, LbpInputs, LbpLayer, LbpMarginRule, LthrInputs, ThrLayer};
pub use single::{cor1_thr, cor2_bp};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    /// A hypothesis of the certificate is violated by the inputs themselves
    /// (as opposed to a certificate that merely collapses to zero).
    #[error("premise violated: {0}")]
    Premise(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, BoundsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    #[serde(rename = "Thm5-SRIP")]
    Thm5Srip,
    #[serde(rename = "Thm5-mu")]
    Thm5Mu,
    #[serde(rename = "Thm7-mu")]
    Thm7Mu,
    #[serde(rename = "Thm10-LTHR")]
    Thm10Lthr,
    #[serde(rename = "Thm11-LBP")]
    Thm11Lbp,
    #[serde(rename = "Cor1-THR")]
    Cor1Thr,
    #[serde(rename = "Cor2-BP")]
    Cor2Bp,
}

impl BoundKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Thm5Srip => "Thm5-SRIP",
            Self::Thm5Mu => "Thm5-mu",
            Self::Thm7Mu => "Thm7-mu",
            Self::Thm10Lthr => "Thm10-LTHR",
            Self::Thm11Lbp => "Thm11-LBP",
            Self::Cor1Thr => "Cor1-THR",
            Self::Cor2Bp => "Cor2-BP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Feasible,
    /// The certificate collapses: no positive perturbation level is covered.
    Infeasible,
    /// The bound is unbounded (zero classifier norm or spread); `eps_max` is
    /// reported as 0 and must not be read as a number.
    Degenerate,
}

/// Which norm `eps_max` and `eps_chain` measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseNorm {
    /// Global `‖E‖₂`.
    L2,
    /// Local patch energy `‖E‖₂,∞`.
    PatchL2Inf,
}

/// Open interval `(lower, upper)`; empty when `lower ≥ upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lower: f64,
    pub upper: f64,
}

impl Window {
    // NaN edges count as empty
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn is_empty(&self) -> bool {
        !(self.lower < self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_kind: BoundKind,
    pub status: BoundStatus,
    pub feasible: bool,
    /// Supremum of admissible perturbation energies; 0 unless feasible.
    pub eps_max: f64,
    pub eps_norm: NoiseNorm,
    /// Largest sparsity covered, when the certificate has such a ceiling.
    pub k_max: Option<usize>,
    /// Threshold window per layer, evaluated at the reported noise levels.
    pub beta_window: Option<Vec<Window>>,
    /// Thresholds the certificate was evaluated with.
    pub betas: Option<Vec<f64>>,
    pub xi_schedule: Option<Vec<f64>>,
    /// `ε_1 … ε_K`, evaluated at the input noise level when there is one and
    /// at `eps_max` otherwise.
    pub eps_chain: Option<Vec<f64>>,
    /// 1-based index of the first layer whose conditions fail.
    pub failing_layer: Option<usize>,
    /// Whether every condition holds at the noise level given as input.
    pub holds_at_input: Option<bool>,
    pub notes: Vec<String>,
    pub inputs: serde_json::Value,
}

impl BoundReport {
    fn new(kind: BoundKind, norm: NoiseNorm, inputs: serde_json::Value) -> Self {
        Self {
            bound_kind: kind,
            status: BoundStatus::Infeasible,
            feasible: false,
            eps_max: 0.0,
            eps_norm: norm,
            k_max: None,
            beta_window: None,
            betas: None,
            xi_schedule: None,
            eps_chain: None,
            failing_layer: None,
            holds_at_input: None,
            notes: Vec::new(),
            inputs,
        }
    }

    /// Records `eps` as the bound: feasible when strictly positive, collapsed
    /// to zero otherwise.
    fn settle(&mut self, eps: f64) {
        if eps > 0.0 && eps.is_finite() {
            self.status = BoundStatus::Feasible;
            self.feasible = true;
            self.eps_max = eps;
        } else if eps.is_infinite() && eps > 0.0 {
            self.degenerate("bound is unbounded");
        } else {
            self.status = BoundStatus::Infeasible;
            self.feasible = false;
            self.eps_max = 0.0;
        }
    }

    fn degenerate(&mut self, why: &str) {
        self.status = BoundStatus::Degenerate;
        self.feasible = false;
        self.eps_max = 0.0;
        self.notes.push(why.to_string());
    }

    /// Whether a perturbation of energy `eps` is covered.
    pub fn certifies(&self, eps: f64) -> bool {
        self.feasible && eps < self.eps_max
    }
}

pub(crate) fn check_margin(margin: f64) -> Result<()> {
    if margin.is_nan() || margin <= 0.0 {
        return Err(BoundsError::Premise(format!("margin must be positive, got {margin}")));
    }
    if margin.is_infinite() {
        return Err(BoundsError::InvalidParameter("margin must be finite".into()));
    }
    Ok(())
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if !(0.0..1.0).contains(&mu) {
        return Err(BoundsError::InvalidParameter(format!("coherence must lie in [0, 1), got {mu}")));
    }
    Ok(())
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(BoundsError::InvalidParameter("sparsity must be at least 1".into()));
    }
    Ok(())
}

pub(crate) fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(BoundsError::InvalidParameter(format!("{name} must be finite and non-negative, got {v}")));
    }
    Ok(())
}

pub(crate) fn check_amplitudes(gamma_min: f64, gamma_max: f64) -> Result<()> {
    if !(gamma_min.is_finite() && gamma_max.is_finite() && gamma_min > 0.0 && gamma_min <= gamma_max) {
        return Err(BoundsError::InvalidParameter(format!(
            "amplitude range needs 0 < |Γmin| ≤ |Γmax|, got [{gamma_min}, {gamma_max}]"
        )));
    }
    Ok(())
}
