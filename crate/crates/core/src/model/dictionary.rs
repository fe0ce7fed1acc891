use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

/// Allowed deviation of an atom's ℓ₂ norm from 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;

const POWER_ITERATIONS: usize = 50;
const POWER_TOL: f64 = 1e-10;

/// Layout of a convolutional dictionary.
///
/// Signals are stored position-major: entry `p * in_channels + c` holds channel
/// `c` at spatial position `p`. Codes follow the same convention with
/// `num_filters` channels, so the atom of filter `f` placed at output position
/// `q` is column `q * num_filters + f`. Filters wrap around the signal
/// boundary, which keeps every atom a shifted copy of its (unit-norm) filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvMeta {
    pub num_filters: usize,
    /// Spatial taps per filter.
    pub filter_len: usize,
    pub stride: usize,
    pub in_channels: usize,
}

impl ConvMeta {
    /// Entries in one filter (`filter_len * in_channels`).
    pub fn filter_size(&self) -> usize {
        self.filter_len * self.in_channels
    }
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    matrix: Array2<f64>,
    conv: Option<ConvMeta>,
    lipschitz: OnceLock<f64>,
    gram: OnceLock<Array2<f64>>,
}

impl PartialEq for Dictionary {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix && self.conv == other.conv
    }
}

impl Dictionary {
    /// Wraps a matrix whose columns already have unit ℓ₂ norm.
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        check_shape(&matrix)?;
        for (j, col) in matrix.axis_iter(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > NORMALIZATION_TOL {
                return Err(ModelError::NotNormalized { column: j, norm });
            }
        }
        Ok(Self::from_parts_unchecked(matrix, None))
    }

    /// Rescales every column to unit norm. Zero columns are rejected.
    pub fn normalized(mut matrix: Array2<f64>) -> Result<Self> {
        check_shape(&matrix)?;
        for (j, mut col) in matrix.axis_iter_mut(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(ModelError::ZeroAtom(j));
            }
            col /= norm;
        }
        Ok(Self::from_parts_unchecked(matrix, None))
    }

    /// Builds the banded (cyclic) convolutional matrix from a bank of filters.
    ///
    /// `filters` is `num_filters × (filter_len * in_channels)` with each row a
    /// unit-norm filter laid out tap-major. `spatial_len` is the number of
    /// spatial positions of the input signal and must be a multiple of the
    /// stride.
    pub fn convolutional(filters: ArrayView2<f64>, meta: ConvMeta, spatial_len: usize) -> Result<Self> {
        validate_meta(&meta, spatial_len)?;
        if filters.dim() != (meta.num_filters, meta.filter_size()) {
            return Err(ModelError::InvalidConvolution(format!(
                "filter bank is {:?}, layout requires ({}, {})",
                filters.dim(),
                meta.num_filters,
                meta.filter_size()
            )));
        }
        for (f, row) in filters.axis_iter(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > NORMALIZATION_TOL {
                return Err(ModelError::NotNormalized { column: f, norm });
            }
        }
        let matrix = expand_filters(filters, &meta, spatial_len);
        Ok(Self::from_parts_unchecked(matrix, Some(meta)))
    }

    /// Attaches a convolutional layout to an existing matrix, verifying that the
    /// matrix is exactly the expansion of the filters stored in its first
    /// `num_filters` columns.
    pub fn with_conv_meta(matrix: Array2<f64>, meta: ConvMeta) -> Result<Self> {
        if meta.in_channels == 0 || !matrix.nrows().is_multiple_of(meta.in_channels) {
            return Err(ModelError::InvalidConvolution(format!(
                "{} rows is not a multiple of {} channels",
                matrix.nrows(),
                meta.in_channels
            )));
        }
        let spatial_len = matrix.nrows() / meta.in_channels;
        validate_meta(&meta, spatial_len)?;
        if matrix.ncols() < meta.num_filters {
            return Err(ModelError::InvalidConvolution("fewer columns than filters".into()));
        }
        let mut filters = Array2::zeros((meta.num_filters, meta.filter_size()));
        for f in 0..meta.num_filters {
            for e in 0..meta.filter_size() {
                filters[[f, e]] = matrix[[e, f]];
            }
        }
        let rebuilt = Self::convolutional(filters.view(), meta, spatial_len)?;
        if rebuilt.matrix != matrix {
            return Err(ModelError::InvalidConvolution(
                "matrix is not the banded expansion of its filters".into(),
            ));
        }
        Ok(rebuilt)
    }

    fn from_parts_unchecked(matrix: Array2<f64>, conv: Option<ConvMeta>) -> Self {
        Self {
            matrix,
            conv,
            lipschitz: OnceLock::new(),
            gram: OnceLock::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts_unchecked(Array2::eye(n), None)
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn atom(&self, j: usize) -> ArrayView1<'_, f64> {
        self.matrix.column(j)
    }

    pub fn conv_meta(&self) -> Option<&ConvMeta> {
        self.conv.as_ref()
    }

    /// Filter bank of a convolutional dictionary (`num_filters × filter_size`).
    pub fn filters(&self) -> Option<Array2<f64>> {
        let meta = self.conv?;
        let mut filters = Array2::zeros((meta.num_filters, meta.filter_size()));
        for f in 0..meta.num_filters {
            for e in 0..meta.filter_size() {
                filters[[f, e]] = self.matrix[[e, f]];
            }
        }
        Some(filters)
    }

    /// `D v`
    pub fn synthesis(&self, code: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&code)
    }

    /// `Dᵀ y`
    pub fn analysis(&self, signal: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.t().dot(&signal)
    }

    /// `DᵀD`, computed once and cached.
    pub fn gram(&self) -> &Array2<f64> {
        self.gram.get_or_init(|| self.matrix.t().dot(&self.matrix))
    }

    /// Largest eigenvalue of `DᵀD` (the Lipschitz constant of the data-term
    /// gradient), estimated once by power iteration and cached.
    pub fn lipschitz(&self) -> f64 {
        *self.lipschitz.get_or_init(|| power_iteration(&self.matrix))
    }

    pub fn coherence(&self) -> Coherence {
        mutual_coherence(self)
    }
}

fn check_shape(matrix: &Array2<f64>) -> Result<()> {
    if matrix.nrows() == 0 {
        return Err(ModelError::Empty("dictionary rows"));
    }
    if matrix.ncols() == 0 {
        return Err(ModelError::Empty("dictionary columns"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidParameter("dictionary has non-finite entries".into()));
    }
    Ok(())
}

fn validate_meta(meta: &ConvMeta, spatial_len: usize) -> Result<()> {
    let bad = |msg: String| Err(ModelError::InvalidConvolution(msg));
    if meta.num_filters == 0 || meta.filter_len == 0 || meta.stride == 0 || meta.in_channels == 0 {
        return bad(format!("all layout fields must be positive: {meta:?}"));
    }
    if spatial_len == 0 || !spatial_len.is_multiple_of(meta.stride) {
        return bad(format!("spatial length {spatial_len} is not a multiple of stride {}", meta.stride));
    }
    if meta.filter_len > spatial_len {
        return bad(format!("filter length {} exceeds signal length {spatial_len}", meta.filter_len));
    }
    Ok(())
}

fn expand_filters(filters: ArrayView2<f64>, meta: &ConvMeta, spatial_len: usize) -> Array2<f64> {
    let c = meta.in_channels;
    let positions = spatial_len / meta.stride;
    let mut matrix = Array2::zeros((spatial_len * c, positions * meta.num_filters));
    for q in 0..positions {
        for f in 0..meta.num_filters {
            let col = q * meta.num_filters + f;
            for t in 0..meta.filter_len {
                let p = (q * meta.stride + t) % spatial_len;
                for ch in 0..c {
                    matrix[[p * c + ch, col]] = filters[[f, t * c + ch]];
                }
            }
        }
    }
    matrix
}

fn power_iteration(matrix: &Array2<f64>) -> f64 {
    let n = matrix.ncols();
    // Fixed, non-degenerate start vector so results are reproducible.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = matrix.t().dot(&matrix.dot(&v));
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next - estimate).abs() <= POWER_TOL * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Mutual coherence of a dictionary with unit-norm atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub value: f64,
    /// Set when the dictionary has a single atom; `value` is then 0.
    pub single_atom: bool,
}

/// `max_{i≠j} |d_iᵀ d_j|`.
pub fn mutual_coherence(d: &Dictionary) -> Coherence {
    if d.cols() < 2 {
        return Coherence {
            value: 0.0,
            single_atom: true,
        };
    }
    let gram = d.gram();
    let mut mu: f64 = 0.0;
    for i in 0..d.cols() {
        for j in (i + 1)..d.cols() {
            mu = mu.max(gram[[i, j]].abs());
        }
    }
    Coherence {
        value: mu,
        single_atom: false,
    }
}

/// Coherence-based upper surrogate of the stripe RIP constant, `(2k−1)μ`.
pub fn srip_surrogate(mu: f64, k: usize) -> f64 {
    (2.0 * k as f64 - 1.0) * mu
}

/// Monte-Carlo lower estimate of the stripe RIP constant `δ_k`: the largest
/// observed `|‖Dv‖²/‖v‖² − 1|` over random vectors whose nonzeros fit inside
/// one stripe (so they are locally k-sparse). Diagnostics only.
pub fn srip_lower_bound_mc<R: Rng + ?Sized>(d: &Dictionary, k: usize, trials: usize, rng: &mut R) -> f64 {
    let cols = d.cols();
    let (block, stripe_positions) = match d.conv_meta() {
        Some(meta) => (meta.num_filters, 2 * meta.filter_len - 1),
        None => (cols, 1),
    };
    let positions = cols / block;
    let window = (stripe_positions.min(positions)) * block;
    let k = k.min(window);
    let mut worst: f64 = 0.0;
    if k == 0 {
        return 0.0;
    }
    for _ in 0..trials {
        let start_pos = rng.random_range(0..=(positions - stripe_positions.min(positions)));
        let offset = start_pos * block;
        let mut v = Array1::<f64>::zeros(cols);
        for idx in sample(rng, window, k).iter() {
            v[offset + idx] = rng.sample(StandardNormal);
        }
        let energy = v.dot(&v);
        if energy == 0.0 {
            continue;
        }
        let dv = d.synthesis(v.view());
        worst = worst.max((dv.dot(&dv) / energy - 1.0).abs());
    }
    worst
}
