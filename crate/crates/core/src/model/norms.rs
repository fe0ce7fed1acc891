//! Local (stripe / patch) norms.
//!
//! Windows slide over spatial positions without wrapping. A code of length
//! `positions * block` is split into `block`-sized groups (one per position);
//! a window of `w` positions covers `w * block` consecutive entries. Windows
//! hanging over either end are zero-padded, which makes them subsets of an
//! interior window, so only interior windows need to be scanned.

use ndarray::ArrayView1;

use super::{Dictionary, ModelError, Result, SparseCode};

/// Maximum number of nonzeros over all windows of `window_positions`
/// consecutive positions of `block` entries each.
pub fn window_max_nonzeros(values: ArrayView1<f64>, block: usize, window_positions: usize) -> usize {
    if values.is_empty() || block == 0 {
        return 0;
    }
    let positions = values.len().div_ceil(block);
    let per_position: Vec<usize> = (0..positions)
        .map(|p| {
            let lo = p * block;
            let hi = (lo + block).min(values.len());
            (lo..hi).filter(|&i| values[i] != 0.0).count()
        })
        .collect();
    let w = window_positions.clamp(1, positions);
    let mut count: usize = per_position[..w].iter().sum();
    let mut best = count;
    for p in w..positions {
        count = count + per_position[p] - per_position[p - w];
        best = best.max(count);
    }
    best
}

fn check_len(code: &SparseCode, d: &Dictionary) -> Result<()> {
    if code.len() != d.cols() {
        return Err(ModelError::DimensionMismatch {
            context: "code length vs dictionary columns",
            expected: d.cols(),
            found: code.len(),
        });
    }
    Ok(())
}

/// `‖Γ‖₀,∞` with stripes of `(2n−1)` positions (`(2n−1)m` entries). Without a
/// convolutional layout the whole vector is one stripe and this is `‖Γ‖₀`.
pub fn stripe_l0inf(code: &SparseCode, d: &Dictionary) -> Result<usize> {
    check_len(code, d)?;
    Ok(match d.conv_meta() {
        Some(meta) => window_max_nonzeros(code.values(), meta.num_filters, 2 * meta.filter_len - 1),
        None => code.l0(),
    })
}

/// Stripe norm with an explicit window length in positions. Use this for
/// strided layers, where the stride-1 stripe length does not apply.
pub fn stripe_l0inf_with_window(code: &SparseCode, d: &Dictionary, window_positions: usize) -> Result<usize> {
    check_len(code, d)?;
    if window_positions == 0 {
        return Err(ModelError::InvalidParameter("window length must be positive".into()));
    }
    Ok(match d.conv_meta() {
        Some(meta) => window_max_nonzeros(code.values(), meta.num_filters, window_positions),
        None => code.l0(),
    })
}

/// `‖Γ‖₀,∞^P`: maximum nonzeros over patches of `n` positions (`n·m` entries).
pub fn patch_l0inf(code: &SparseCode, d: &Dictionary) -> Result<usize> {
    check_len(code, d)?;
    Ok(match d.conv_meta() {
        Some(meta) => window_max_nonzeros(code.values(), meta.num_filters, meta.filter_len),
        None => code.l0(),
    })
}

/// `‖E‖₂,∞^P`: largest ℓ₂ norm over sliding windows of `patch_len` entries.
pub fn patch_l2inf(signal: ArrayView1<f64>, patch_len: usize) -> Result<f64> {
    if signal.is_empty() {
        return Err(ModelError::Empty("signal"));
    }
    if patch_len == 0 || patch_len > signal.len() {
        return Err(ModelError::InvalidParameter(format!(
            "patch length {patch_len} must be in 1..={}",
            signal.len()
        )));
    }
    let sq: Vec<f64> = signal.iter().map(|v| v * v).collect();
    // Recompute each window sum directly; running sums drift for long signals.
    let best = sq
        .windows(patch_len)
        .map(|w| w.iter().sum::<f64>())
        .fold(0.0, f64::max);
    Ok(best.sqrt())
}
