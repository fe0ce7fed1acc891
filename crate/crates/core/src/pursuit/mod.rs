//! Sparse-coding encoders: soft thresholding, basis pursuit solved by
//! proximal gradient, their layered compositions, and final classification.

mod bp;
mod exhaustive;
mod layered;
mod threshold;

pub use bp::{
    bp_pursuit, bp_pursuit_recorded, kkt_residual, lasso_objective, BpSchedule, BpSolution, SolveStatus,
    SolverSettings, Unfolding, LIPSCHITZ_MARGIN,
};
pub use exhaustive::l0_pursuit_exhaustive;
pub use layered::{
    classify, layered_bp, layered_thr, Classifier, LayerReport, LayerTape, LayerTrace, Pipeline,
    Prediction, PursuitTrace, TraceReport,
};
pub use threshold::{shrink, soft_threshold, thr_pursuit, ThresholdSchedule};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum PursuitError {
    #[error("threshold must be a finite non-negative number, got {0}")]
    NegativeThreshold(f64),
    #[error("Lagrangian multiplier must be a finite positive number, got {0}")]
    NonPositiveMultiplier(f64),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("basis pursuit did not converge in {iterations} iterations (KKT residual {kkt_residual:e})")]
    NotConverged {
        iterations: usize,
        kkt_residual: f64,
        last: Box<BpSolution>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, PursuitError>;
