use nalgebra::{DMatrix, SymmetricEigen, SVD};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{derived_rng, DictMode, Result, Stream, SynthConfig, SynthError};
use crate::model::{mutual_coherence, Dictionary};

/// Round budget of the coherence reduction.
pub const REDUCTION_ROUNDS: usize = 100;
/// Per-round clipping level relative to the current coherence.
pub const REDUCTION_FACTOR: f64 = 0.9;
/// Slack on the target: exact clipping lands on it up to rounding.
const TARGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryStats {
    /// Coherence of the normalized Gaussian draw.
    pub initial_mu: f64,
    /// Coherence of the returned dictionary.
    pub mu: f64,
    pub rounds: usize,
}

/// Draws the dictionary for `config` from its own seed stream.
pub fn random_dictionary(config: &SynthConfig) -> Result<(Dictionary, DictionaryStats)> {
    if config.m < 2 {
        return Err(SynthError::InvalidConfig(format!("a dictionary needs at least 2 atoms, got {}", config.m)));
    }
    if config.n == 0 {
        return Err(SynthError::InvalidConfig("signal dimension must be positive".into()));
    }
    let mut rng = derived_rng(config.seed, Stream::Dictionary);
    let raw = Array2::from_shape_simple_fn((config.n, config.m), || rng.sample::<f64, _>(StandardNormal));
    let gaussian = Dictionary::normalized(raw)?;
    let initial_mu = mutual_coherence(&gaussian).value;
    match config.dict_mode {
        DictMode::GaussianNormalized => Ok((gaussian, DictionaryStats { initial_mu, mu: initial_mu, rounds: 0 })),
        DictMode::CoherenceReduced => reduce_coherence(gaussian, config.target_mu),
    }
}

/// Gram shrinkage: each round clips the off-diagonal Gram entries to
/// `max(0.9·μ, target)`, factors the clipped matrix back into `N` rows
/// through its leading eigenpairs, rotates the factor onto the previous
/// dictionary and renormalizes the atoms. The least coherent iterate is
/// returned, so the result is never worse than the input.
pub fn reduce_coherence(d: Dictionary, target: Option<f64>) -> Result<(Dictionary, DictionaryStats)> {
    let initial_mu = mutual_coherence(&d).value;
    let mut best = (d.clone(), initial_mu);
    let mut current = d;
    let mut mu = initial_mu;
    let mut rounds = 0;
    while rounds < REDUCTION_ROUNDS && !target.is_some_and(|t| mu <= t + TARGET_SLACK) {
        let level = (REDUCTION_FACTOR * mu).max(target.unwrap_or(0.0));
        let next = match Dictionary::normalized(shrink_round(current.matrix(), level)) {
            Ok(next) => next,
            // a collapsed atom ends the reduction; keep the best so far
            Err(_) => break,
        };
        rounds += 1;
        mu = mutual_coherence(&next).value;
        if mu < best.1 {
            best = (next.clone(), mu);
        }
        current = next;
    }
    Ok((best.0, DictionaryStats { initial_mu, mu: best.1, rounds }))
}

fn shrink_round(d: &Array2<f64>, level: f64) -> Array2<f64> {
    let (n, m) = d.dim();
    let mut gram = d.t().dot(d);
    for ((i, j), g) in gram.indexed_iter_mut() {
        if i != j {
            *g = g.clamp(-level, level);
        }
    }
    let eig = SymmetricEigen::new(DMatrix::from_fn(m, m, |i, j| gram[[i, j]]));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    // factor B (n × m) with BᵀB ≈ clipped Gram; rows beyond the rank stay zero
    let mut factor = DMatrix::<f64>::zeros(n, m);
    for (row, &idx) in order.iter().take(n.min(m)).enumerate() {
        let scale = eig.eigenvalues[idx].max(0.0).sqrt();
        for j in 0..m {
            factor[(row, j)] = scale * eig.eigenvectors[(j, idx)];
        }
    }
    // orthogonal Procrustes: the rotation Q minimising ‖QB − D‖
    let old = DMatrix::from_fn(n, m, |i, j| d[[i, j]]);
    let svd = SVD::new(&old * factor.transpose(), true, true);
    let rotated = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => u * v_t * factor,
        _ => factor,
    };
    Array2::from_shape_fn((n, m), |(i, j)| rotated[(i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;

    fn column_norms(d: &Array2<f64>) -> Vec<f64> {
        d.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect()
    }

    fn cfg(n: usize, m: usize, mode: DictMode, seed: u64) -> SynthConfig {
        SynthConfig { n, m, dict_mode: mode, seed, ..Default::default() }
    }

    /// Independent coherence: pairwise dot products without the Gram cache.
    fn scan(d: &Dictionary) -> f64 {
        let mut mu: f64 = 0.0;
        for i in 0..d.cols() {
            for j in 0..i {
                mu = mu.max(d.atom(i).dot(&d.atom(j)).abs());
            }
        }
        mu
    }

    #[test]
    fn golden_gaussian_coherence() {
        let golden: f64 = include_str!("../../tests/golden/mu_gaussian_100x40_seed7.txt").trim().parse().unwrap();
        let (d, stats) = random_dictionary(&cfg(100, 40, DictMode::GaussianNormalized, 7)).unwrap();
        assert!((stats.mu - scan(&d)).abs() < 1e-14);
        assert!((stats.mu - golden).abs() < 1e-12, "{} vs {golden}", stats.mu);
    }

    #[test]
    fn gaussian_coherence_is_in_the_concentration_band() {
        for (n, m) in [(100, 40), (100, 150), (50, 200)] {
            let (_, stats) = random_dictionary(&cfg(n, m, DictMode::GaussianNormalized, 1)).unwrap();
            let band = 5.0 * ((m as f64).ln() / n as f64).sqrt();
            assert!(stats.mu < band, "{n}x{m}: {} ≥ {band}", stats.mu);
        }
    }

    #[test]
    fn reduction_never_increases_coherence() {
        for (n, m, seed) in [(100, 40, 2), (100, 150, 2), (30, 60, 5)] {
            let (g, gs) = random_dictionary(&cfg(n, m, DictMode::GaussianNormalized, seed)).unwrap();
            let (r, rs) = random_dictionary(&cfg(n, m, DictMode::CoherenceReduced, seed)).unwrap();
            assert_eq!(gs.mu, rs.initial_mu);
            assert!(rs.mu <= gs.mu);
            assert!((rs.mu - scan(&r)).abs() < 1e-15);
            assert_eq!((r.rows(), r.cols()), (g.rows(), g.cols()));
            for norm in column_norms(r.matrix()) {
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overcomplete_reduction_is_substantial() {
        let (_, stats) = random_dictionary(&cfg(100, 150, DictMode::CoherenceReduced, 1)).unwrap();
        assert!(stats.mu < 0.7 * stats.initial_mu, "{stats:?}");
        assert_eq!(stats.rounds, REDUCTION_ROUNDS);
    }

    #[test]
    fn target_stops_early() {
        let config = SynthConfig { target_mu: Some(0.033), ..cfg(100, 40, DictMode::CoherenceReduced, 1) };
        let (_, stats) = random_dictionary(&config).unwrap();
        assert!(stats.rounds < REDUCTION_ROUNDS, "{stats:?}");
        assert!(stats.mu <= 0.033 + 1e-12, "{stats:?}");
    }

    #[test]
    fn too_few_atoms() {
        assert!(matches!(
            random_dictionary(&cfg(10, 1, DictMode::GaussianNormalized, 0)),
            Err(SynthError::InvalidConfig(_))
        ));
    }

    #[test]
    fn deterministic() {
        let c = cfg(40, 60, DictMode::CoherenceReduced, 11);
        assert_eq!(random_dictionary(&c).unwrap().0, random_dictionary(&c).unwrap().0);
    }
}
