use serde::{Deserialize, Serialize};

use super::{Result, SynthError, MIN_ACCEPTANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DictMode {
    GaussianNormalized,
    #[default]
    CoherenceReduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    #[default]
    Positive,
    RandomSign,
}

/// Parameters of a synthetic single-layer experiment.
///
/// JSON field names are `seed`, `N`, `M`, `k`, `amp_range`, `margin_floor`,
/// `n_signals`, `dict_mode`, `sign_mode`, `min_acceptance` and the optional
/// `target_mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Signal dimension.
    #[serde(rename = "N")]
    pub n: usize,
    /// Number of atoms.
    #[serde(rename = "M")]
    pub m: usize,
    /// Nonzeros per code.
    pub k: usize,
    /// Magnitude range `[lo, hi]` of the nonzeros.
    pub amp_range: [f64; 2],
    /// Smallest admissible `|wᵀΓ|`.
    pub margin_floor: f64,
    pub n_signals: usize,
    pub dict_mode: DictMode,
    pub sign_mode: SignMode,
    /// Rejection sampling aborts when its acceptance rate falls below this.
    pub min_acceptance: f64,
    /// Coherence at which reduction stops early. Without it the reduction
    /// runs its full round budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_mu: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 100,
            m: 40,
            k: 4,
            amp_range: [1.0, 2.0],
            margin_floor: 1.0,
            n_signals: 500,
            dict_mode: DictMode::default(),
            sign_mode: SignMode::default(),
            min_acceptance: MIN_ACCEPTANCE,
            target_mu: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.amp_range;
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad(format!("amp_range needs 0 < lo ≤ hi, got [{lo}, {hi}]"));
        }
        if self.n == 0 {
            return bad("N must be positive".into());
        }
        if self.m < 2 {
            return bad(format!("M must be at least 2, got {}", self.m));
        }
        if self.k == 0 || self.k > self.m {
            return bad(format!("k must lie in 1..={}, got {}", self.m, self.k));
        }
        if !(self.margin_floor.is_finite() && self.margin_floor > 0.0) {
            return bad(format!("margin_floor must be positive, got {}", self.margin_floor));
        }
        if self.n_signals == 0 {
            return bad("n_signals must be positive".into());
        }
        if !(self.min_acceptance > 0.0 && self.min_acceptance <= 1.0) {
            return bad(format!("min_acceptance must lie in (0, 1], got {}", self.min_acceptance));
        }
        if let Some(t) = self.target_mu {
            if !(0.0..1.0).contains(&t) {
                return bad(format!("target_mu must lie in [0, 1), got {t}"));
            }
        }
        Ok(())
    }
}
