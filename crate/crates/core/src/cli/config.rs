use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::attack::{AttackKind, Loss, SweepOptions};
use crate::pursuit::{BpSchedule, SolverSettings, ThresholdSchedule};
use crate::synth::{StackSpec, SynthConfig};

/// Experiment description read from JSON.
///
/// ```json
/// {
///   "synth": { "seed": 1, "N": 100, "M": 40, "k": 4, "amp_range": [1, 2],
///              "margin_floor": 1, "n_signals": 500,
///              "dict_mode": "coherence-reduced", "target_mu": 0.033 },
///   "stack": null,
///   "pursuit": { "auto_from_bounds": true },
///   "attack": { "kind": "GradAscent-l2", "loss": "neg-margin",
///               "eps_grid": [0, 0.01, 0.1, 1] },
///   "output_dir": "out/undercomplete",
///   "emit_plot": true
/// }
/// ```
///
/// `stack` (optional) turns the experiment multi-layer; see [`StackSpec`].
/// With `auto_from_bounds` false, `pursuit.thr` (`{"betas": [...]}`) and
/// `pursuit.bp` (`{"xis": [...], "solver": {...}}`) must both be given, one
/// entry per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    #[serde(default)]
    pub stack: Option<StackSpec>,
    #[serde(default)]
    pub pursuit: PursuitConfig,
    pub attack: AttackGrid,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_plot: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PursuitConfig {
    /// Derive thresholds and multipliers from the certificates.
    pub auto_from_bounds: bool,
    pub thr: Option<ThresholdSchedule>,
    pub bp: Option<BpSchedule>,
    /// Non-negative thresholding (one-sided shrinkage).
    pub nonneg: bool,
    /// Solver settings for automatically derived basis-pursuit schedules.
    pub solver: SolverSettings,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self { auto_from_bounds: true, thr: None, bp: None, nonneg: false, solver: SolverSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackGrid {
    #[serde(default)]
    pub kind: AttackKind,
    #[serde(default)]
    pub loss: Loss,
    /// Strictly increasing, non-negative budgets.
    pub eps_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn depth(&self) -> usize {
        self.stack.as_ref().map_or(1, StackSpec::depth)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(stack) = &self.stack {
            stack.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.sweep_options(None).validate().map_err(|e| CliError::Config(e.to_string()))?;
        let depth = self.depth();
        let p = &self.pursuit;
        p.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if p.auto_from_bounds {
            if p.thr.is_some() || p.bp.is_some() {
                return Err(CliError::Config(
                    "pursuit.thr and pursuit.bp must be omitted when auto_from_bounds is set".into(),
                ));
            }
        } else {
            match (&p.thr, &p.bp) {
                (Some(thr), Some(bp)) if thr.depth() == depth && bp.depth() == depth => {
                    // deserialization bypasses the constructors' checks
                    ThresholdSchedule::new(thr.betas().to_vec()).map_err(|e| CliError::Config(e.to_string()))?;
                    BpSchedule::new(bp.xis().to_vec(), *bp.solver()).map_err(|e| CliError::Config(e.to_string()))?;
                }
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(format!("pursuit schedules must have one entry per layer ({depth})")));
                }
                _ => {
                    return Err(CliError::Config(
                        "pursuit.thr and pursuit.bp are required when auto_from_bounds is false".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn sweep_options(&self, jobs: Option<usize>) -> SweepOptions {
        SweepOptions {
            kind: self.attack.kind,
            loss: self.attack.loss,
            grid: self.attack.eps_grid.clone(),
            seed: self.synth.seed,
            jobs,
        }
    }
}
