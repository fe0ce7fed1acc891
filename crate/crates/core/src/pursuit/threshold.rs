use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{PursuitError, Result};
use crate::model::{Dictionary, ModelError, SparseCode};

/// Scalar shrinkage. Signed: `sign(x)·max(0, |x|−β)`; non-negative:
/// `max(0, x−β)`.
#[inline]
pub fn shrink(x: f64, beta: f64, nonneg: bool) -> f64 {
    if nonneg {
        (x - beta).max(0.0)
    } else if x > beta {
        x - beta
    } else if x < -beta {
        x + beta
    } else {
        0.0
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(PursuitError::NegativeThreshold(beta))
    }
}

pub fn soft_threshold(v: ArrayView1<f64>, beta: f64, nonneg: bool) -> Result<Array1<f64>> {
    check_beta(beta)?;
    Ok(v.mapv(|x| shrink(x, beta, nonneg)))
}

/// One-shot thresholding of the analysis coefficients, `S_β(Dᵀy)`.
pub fn thr_pursuit(y: ArrayView1<f64>, d: &Dictionary, beta: f64, nonneg: bool) -> Result<SparseCode> {
    check_beta(beta)?;
    if y.len() != d.rows() {
        return Err(ModelError::DimensionMismatch {
            context: "signal length vs dictionary rows",
            expected: d.rows(),
            found: y.len(),
        }
        .into());
    }
    let mut coeffs = d.analysis(y);
    coeffs.mapv_inplace(|x| shrink(x, beta, nonneg));
    Ok(SparseCode::from_dense(coeffs))
}

/// Per-layer thresholds `β_1 … β_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    betas: Vec<f64>,
}

impl ThresholdSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(PursuitError::InvalidSchedule("no thresholds".into()));
        }
        for &b in &betas {
            check_beta(b)?;
        }
        Ok(Self { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn depth(&self) -> usize {
        self.betas.len()
    }
}
