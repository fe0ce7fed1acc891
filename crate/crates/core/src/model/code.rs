use ndarray::{Array1, ArrayView1};

use super::{ModelError, Result};

/// A representation vector together with its (sorted) support.
///
/// The support is recomputed from the values on construction, so the two can
/// never disagree: an index is in the support exactly when its value is a
/// nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    values: Array1<f64>,
    support: Vec<usize>,
}

impl SparseCode {
    pub fn from_dense(values: Array1<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { values, support }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: Array1::zeros(len),
            support: Vec::new(),
        }
    }

    /// Places `amplitudes[i]` at `support[i]`. Indices must be distinct and in
    /// range, amplitudes nonzero.
    pub fn from_support(len: usize, support: &[usize], amplitudes: &[f64]) -> Result<Self> {
        if support.len() != amplitudes.len() {
            return Err(ModelError::DimensionMismatch {
                context: "sparse code amplitudes",
                expected: support.len(),
                found: amplitudes.len(),
            });
        }
        let mut values = Array1::zeros(len);
        for (&i, &a) in support.iter().zip(amplitudes) {
            if i >= len {
                return Err(ModelError::InvalidParameter(format!("support index {i} out of range {len}")));
            }
            if a == 0.0 || !a.is_finite() {
                return Err(ModelError::InvalidParameter(format!("amplitude {a} at index {i}")));
            }
            if values[i] != 0.0 {
                return Err(ModelError::InvalidParameter(format!("duplicate support index {i}")));
            }
            values[i] = a;
        }
        Ok(Self::from_dense(values))
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `‖Γ‖₀`
    pub fn l0(&self) -> usize {
        self.support.len()
    }

    /// Smallest nonzero magnitude, `|Γmin|`.
    pub fn gamma_min(&self) -> Option<f64> {
        self.support.iter().map(|&i| self.values[i].abs()).reduce(f64::min)
    }

    /// Largest magnitude, `|Γmax|`.
    pub fn gamma_max(&self) -> Option<f64> {
        self.support.iter().map(|&i| self.values[i].abs()).reduce(f64::max)
    }

    /// Whether every nonzero of `self` is also a nonzero of `other`.
    pub fn support_within(&self, other: &SparseCode) -> bool {
        self.support.iter().all(|i| other.support.binary_search(i).is_ok())
    }
}

impl From<Array1<f64>> for SparseCode {
    fn from(values: Array1<f64>) -> Self {
        Self::from_dense(values)
    }
}
