use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView1;

use super::{PursuitError, Result};
use crate::model::{Dictionary, ModelError, SparseCode};

/// Best `k`-term approximation by enumerating every support of size
/// `min(k, cols)` and solving least squares on each. Exponential in `k`; meant
/// as a reference solver on small dictionaries. Ties keep the support that
/// comes first in lexicographic order.
pub fn l0_pursuit_exhaustive(y: ArrayView1<f64>, d: &Dictionary, k: usize) -> Result<SparseCode> {
    if y.len() != d.rows() {
        return Err(ModelError::DimensionMismatch {
            context: "signal length vs dictionary rows",
            expected: d.rows(),
            found: y.len(),
        }
        .into());
    }
    let m = d.cols();
    let k = k.min(m);
    if k == 0 {
        return Ok(SparseCode::zeros(m));
    }
    if k > d.rows() {
        return Err(PursuitError::InvalidSchedule(format!(
            "support size {k} exceeds the signal dimension {}",
            d.rows()
        )));
    }
    let target = DVector::from_iterator(y.len(), y.iter().copied());
    let mut support: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>, DVector<f64>)> = None;
    loop {
        let sub = DMatrix::from_fn(d.rows(), k, |r, c| d.matrix()[[r, support[c]]]);
        let coeffs = sub
            .clone()
            .svd(true, true)
            .solve(&target, 1e-12)
            .map_err(|e| PursuitError::InvalidSchedule(e.to_string()))?;
        let err = (&sub * &coeffs - &target).norm();
        if best.as_ref().is_none_or(|(b, _, _)| err < *b) {
            best = Some((err, support.clone(), coeffs));
        }
        if !next_combination(&mut support, m) {
            break;
        }
    }
    let (_, support, coeffs) = best.expect("at least one support is enumerated");
    let mut values = ndarray::Array1::zeros(m);
    for (&j, &c) in support.iter().zip(coeffs.iter()) {
        values[j] = c;
    }
    Ok(SparseCode::from_dense(values))
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
