use serde::{Deserialize, Serialize};

use super::{CliError, ExperimentConfig};
use crate::attack::{accuracy_sweep, trend_violations, AttackKind, SweepItem, SweepRow, SweepStats, Target, TREND_TOLERANCE};
use crate::bounds::{
    cor1_thr, cor2_bp, thm10_lthr, thm11_lbp, BoundReport, LbpInputs, LbpLayer, LbpMarginRule, LthrInputs, ThrLayer,
};
use crate::model::{patch_l0inf, stripe_l0inf, Dictionary, LinearClassifier, ModelStack, SparseCode};
use crate::pursuit::{BpSchedule, Classifier, Pipeline, ThresholdSchedule};
use crate::synth::{LayeredProblem, SyntheticProblem};

/// Generated (or loaded) data together with the model that produced it.
#[derive(Debug, Clone)]
pub enum Problem {
    Single(SyntheticProblem),
    Layered(LayeredProblem),
}

impl Problem {
    pub fn generate(config: &ExperimentConfig) -> Result<Self, CliError> {
        Ok(match &config.stack {
            None => Self::Single(SyntheticProblem::generate(&config.synth)?),
            Some(spec) => Self::Layered(LayeredProblem::generate(&config.synth, spec)?),
        })
    }

    pub fn stack(&self) -> ModelStack {
        match self {
            Self::Single(p) => ModelStack::single(p.dictionary.clone()),
            Self::Layered(p) => p.stack.clone(),
        }
    }

    pub fn classifier(&self) -> &LinearClassifier {
        match self {
            Self::Single(p) => &p.classifier,
            Self::Layered(p) => &p.classifier,
        }
    }

    pub fn mus(&self) -> Vec<f64> {
        match self {
            Self::Single(p) => vec![p.dictionary_stats.mu],
            Self::Layered(p) => p.mus.clone(),
        }
    }

    pub fn margin_star(&self) -> f64 {
        match self {
            Self::Single(p) => p.data.margin_star(),
            Self::Layered(p) => p.margin_star(),
        }
    }

    pub fn items(&self) -> Vec<SweepItem> {
        match self {
            Self::Single(p) => p
                .data
                .samples
                .iter()
                .map(|s| SweepItem { signal: s.signal.clone(), target: Target::Binary(s.label) })
                .collect(),
            Self::Layered(p) => p
                .data
                .samples
                .iter()
                .map(|s| SweepItem { signal: s.synthesis.signal.clone(), target: Target::Binary(s.label) })
                .collect(),
        }
    }

    /// Codes of every sample, grouped by layer (first layer first).
    fn layer_codes(&self) -> Vec<Vec<&SparseCode>> {
        match self {
            Self::Single(p) => vec![p.data.samples.iter().map(|s| &s.code).collect()],
            Self::Layered(p) => (0..p.stack.depth())
                .map(|i| p.data.samples.iter().map(|s| &s.synthesis.codes[i]).collect())
                .collect(),
        }
    }
}

/// Empirical sparsity and amplitude statistics of one layer's codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub mu: f64,
    pub stripe_sparsity: usize,
    pub patch_sparsity: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

fn profile(codes: &[&SparseCode], d: &Dictionary, mu: f64) -> Result<LayerProfile, CliError> {
    let mut out = LayerProfile { mu, stripe_sparsity: 0, patch_sparsity: 0, gamma_min: f64::INFINITY, gamma_max: 0.0 };
    for code in codes {
        out.stripe_sparsity = out.stripe_sparsity.max(stripe_l0inf(code, d)?);
        out.patch_sparsity = out.patch_sparsity.max(patch_l0inf(code, d)?);
        if let (Some(lo), Some(hi)) = (code.gamma_min(), code.gamma_max()) {
            out.gamma_min = out.gamma_min.min(lo);
            out.gamma_max = out.gamma_max.max(hi);
        }
    }
    if !out.gamma_min.is_finite() {
        return Err(CliError::Config("dataset contains only zero codes".into()));
    }
    Ok(out)
}

/// Certificates for both pipelines and the schedules the sweep will use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsOutput {
    pub depth: usize,
    pub signal_dim: usize,
    pub n_signals: usize,
    /// Smallest dataset margin `O*`.
    pub margin_star: f64,
    pub w_norm: f64,
    /// Largest `‖Γ_K‖₀` over the dataset.
    pub deepest_l0: usize,
    pub layers: Vec<LayerProfile>,
    pub thr: BoundReport,
    pub bp: BoundReport,
    pub thr_betas: Vec<f64>,
    pub bp_xis: Vec<f64>,
    /// `auto-from-bounds` or `config`.
    pub schedule_source: String,
    pub notes: Vec<String>,
}

impl BoundsOutput {
    pub fn pipelines(&self, config: &ExperimentConfig) -> Result<Vec<Pipeline>, CliError> {
        let (thr, bp) = if config.pursuit.auto_from_bounds {
            (
                ThresholdSchedule::new(self.thr_betas.clone())?,
                BpSchedule::new(self.bp_xis.clone(), config.pursuit.solver)?,
            )
        } else {
            let missing = || CliError::Config("manual schedules missing".into());
            (
                config.pursuit.thr.clone().ok_or_else(missing)?,
                config.pursuit.bp.clone().ok_or_else(missing)?,
            )
        };
        Ok(vec![Pipeline::Thr { schedule: thr, nonneg: config.pursuit.nonneg }, Pipeline::Bp { schedule: bp }])
    }

    /// Bound of `pipeline` ("THR" or "BP").
    pub fn report(&self, pipeline: &str) -> Option<&BoundReport> {
        match pipeline {
            "THR" => Some(&self.thr),
            "BP" => Some(&self.bp),
            _ => None,
        }
    }
}

/// Evaluates the certificates on `problem` and, in automatic mode, derives
/// the thresholds from the thresholding certificate and `ξ = 4ε` from the
/// basis-pursuit one.
pub fn compute_bounds(problem: &Problem, config: &ExperimentConfig) -> Result<BoundsOutput, CliError> {
    let stack = problem.stack();
    let mus = problem.mus();
    let codes = problem.layer_codes();
    let layers = codes
        .iter()
        .zip(stack.layers())
        .zip(&mus)
        .map(|((c, d), &mu)| profile(c, d, mu))
        .collect::<Result<Vec<_>, _>>()?;
    let deepest_l0 = codes.last().map_or(0, |c| c.iter().map(|g| g.l0()).max().unwrap_or(0));
    let margin = problem.margin_star();
    let w_norm = problem.classifier().weight_norm();
    let mut notes = Vec::new();

    let (thr, bp, bp_xis_at_bound) = if layers.len() == 1 {
        let l = &layers[0];
        let thr = cor1_thr(l.mu, deepest_l0, l.gamma_min, l.gamma_max, w_norm, margin, None)?;
        let bp = cor2_bp(l.mu, deepest_l0, w_norm, margin)?;
        let xis = bp.xi_schedule.clone();
        (thr, bp, xis)
    } else {
        let thr_inputs = LthrInputs {
            layers: layers
                .iter()
                .map(|l| ThrLayer {
                    mu: l.mu,
                    k: l.stripe_sparsity,
                    k_patch: l.patch_sparsity,
                    gamma_min: l.gamma_min,
                    gamma_max: l.gamma_max,
                    beta: None,
                })
                .collect(),
            eps0: 0.0,
            w_norm,
            l0: deepest_l0,
            margin,
        };
        let thr = thm10_lthr(&thr_inputs)?;
        let lbp_layers: Vec<LbpLayer> =
            layers.iter().map(|l| LbpLayer { mu: l.mu, k: l.stripe_sparsity, k_patch: l.patch_sparsity }).collect();
        let mut bp_inputs = LbpInputs {
            layers: lbp_layers,
            eps_local: 0.0,
            w_norm,
            l0: deepest_l0,
            margin,
            rule: LbpMarginRule::Consistent,
        };
        let bp = thm11_lbp(&bp_inputs)?;
        bp_inputs.eps_local = bp.eps_max;
        let xis = thm11_lbp(&bp_inputs)?.xi_schedule;
        (thr, bp, xis)
    };

    let (thr_betas, bp_xis, source) = if config.pursuit.auto_from_bounds {
        let betas = auto_betas(&thr, &mut notes);
        let xis = match bp_xis_at_bound {
            Some(xis) if bp.feasible => xis,
            _ => nominal_xis(&layers, w_norm, deepest_l0, margin, &mut notes)?,
        };
        (betas, xis, "auto-from-bounds")
    } else {
        let thr = config.pursuit.thr.as_ref().map(|s| s.betas().to_vec()).unwrap_or_default();
        let bp = config.pursuit.bp.as_ref().map(|s| s.xis().to_vec()).unwrap_or_default();
        (thr, bp, "config")
    };

    Ok(BoundsOutput {
        depth: layers.len(),
        signal_dim: stack.signal_dim(),
        n_signals: codes.first().map_or(0, Vec::len),
        margin_star: margin,
        w_norm,
        deepest_l0,
        layers,
        thr,
        bp,
        thr_betas,
        bp_xis,
        schedule_source: source.to_string(),
        notes,
    })
}

/// Thresholds of a feasible thresholding certificate. When the certificate
/// collapses, each layer falls back to the midpoint of its noiseless
/// support-recovery window, which ignores the margin constraint.
fn auto_betas(report: &BoundReport, notes: &mut Vec<String>) -> Vec<f64> {
    let betas = report.betas.clone().unwrap_or_default();
    if report.feasible {
        return betas;
    }
    let windows = report.beta_window.clone().unwrap_or_default();
    notes.push("thresholding certificate collapsed: thresholds set to the support-window midpoints".into());
    windows.iter().zip(&betas).map(|(w, &b)| if w.is_empty() || !w.contains(b) { w.midpoint().max(0.0) } else { b }).collect()
}

/// Multipliers `ξ = 4ε` at the noise level the basis-pursuit certificate
/// would give if the coherence premises held. Used when they do not.
fn nominal_xis(
    layers: &[LayerProfile],
    w_norm: f64,
    l0: usize,
    margin: f64,
    notes: &mut Vec<String>,
) -> Result<Vec<f64>, CliError> {
    let mut inputs = LbpInputs {
        layers: layers.iter().map(|l| LbpLayer { mu: 0.0, k: l.stripe_sparsity, k_patch: l.patch_sparsity }).collect(),
        eps_local: 0.0,
        w_norm,
        l0,
        margin,
        rule: LbpMarginRule::Consistent,
    };
    inputs.eps_local = thm11_lbp(&inputs)?.eps_max;
    notes.push(format!(
        "basis-pursuit certificate infeasible: multipliers use the coherence-free noise level {:.6}",
        inputs.eps_local
    ));
    thm11_lbp(&inputs)?
        .xi_schedule
        .filter(|x| x.iter().all(|&v| v > 0.0))
        .ok_or_else(|| CliError::Premise("no positive multiplier can be derived".into()))
}

/// Per-pipeline digest of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub pipeline: String,
    pub clean_accuracy: f64,
    pub bound_kind: String,
    pub bound_feasible: bool,
    /// Certified energy in the norm of the certificate.
    pub bound_eps_max: f64,
    /// The certificate in attack-budget units, when it is feasible.
    pub bound_marker: Option<f64>,
    /// Smallest budget at which accuracy drops below 100%.
    pub breakdown_eps: Option<f64>,
    pub first_eps_below_95: Option<f64>,
    /// Whether every budget below the marker kept 100% accuracy.
    pub certified_region_clean: bool,
    pub trend_violations: Vec<f64>,
    pub approximate_gradients: usize,
    pub nonconverged_runs: usize,
    pub zero_gradients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub n_signals: usize,
    pub attack_kind: AttackKind,
    pub norm_kind: String,
    /// `√N` for sign attacks, whose budget `ε` allows `‖E‖₂ ≤ √N·ε`.
    pub l2_per_budget_unit: f64,
    pub mu: Vec<f64>,
    pub margin_star: f64,
    pub pipelines: Vec<PipelineSummary>,
}

/// Certificate expressed as an attack budget: `ε₂` for ℓ₂ attacks and
/// `ε₂/√N` for sign attacks.
pub fn bound_marker(report: &BoundReport, kind: AttackKind, signal_dim: usize) -> Option<f64> {
    report.feasible.then(|| report.eps_max / kind.l2_budget(1.0, signal_dim))
}

pub fn summarize(
    rows: &[SweepRow],
    stats: &[SweepStats],
    bounds: &BoundsOutput,
    config: &ExperimentConfig,
) -> SweepSummary {
    let kind = config.attack.kind;
    let pipelines = stats
        .iter()
        .map(|s| {
            let own: Vec<&SweepRow> = rows.iter().filter(|r| r.pipeline == s.pipeline).collect();
            let report = bounds.report(&s.pipeline);
            let marker = report.and_then(|r| bound_marker(r, kind, bounds.signal_dim));
            let accuracy: Vec<f64> = own.iter().map(|r| r.accuracy).collect();
            let trend = trend_violations(&accuracy, TREND_TOLERANCE).into_iter().map(|i| own[i + 1].eps).collect();
            PipelineSummary {
                pipeline: s.pipeline.clone(),
                clean_accuracy: own.iter().find(|r| r.eps == 0.0).map_or(f64::NAN, |r| r.accuracy),
                bound_kind: report.map_or(String::new(), |r| r.bound_kind.label().to_string()),
                bound_feasible: report.is_some_and(|r| r.feasible),
                bound_eps_max: report.map_or(0.0, |r| r.eps_max),
                bound_marker: marker,
                breakdown_eps: own.iter().find(|r| r.n_correct < r.n_signals).map(|r| r.eps),
                first_eps_below_95: own.iter().find(|r| r.accuracy < 0.95).map(|r| r.eps),
                certified_region_clean: own
                    .iter()
                    .filter(|r| marker.is_some_and(|m| r.eps < m))
                    .all(|r| r.n_correct == r.n_signals),
                trend_violations: trend,
                approximate_gradients: s.approximate_gradients,
                nonconverged_runs: s.nonconverged_runs,
                zero_gradients: s.zero_gradients,
            }
        })
        .collect();
    SweepSummary {
        seed: config.synth.seed,
        n_signals: rows.first().map_or(0, |r| r.n_signals),
        attack_kind: kind,
        norm_kind: kind.norm_kind().to_string(),
        l2_per_budget_unit: kind.l2_budget(1.0, bounds.signal_dim),
        mu: bounds.layers.iter().map(|l| l.mu).collect(),
        margin_star: bounds.margin_star,
        pipelines,
    }
}

/// Everything a sweep produces.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub bounds: BoundsOutput,
    pub rows: Vec<SweepRow>,
    pub stats: Vec<SweepStats>,
    pub summary: SweepSummary,
}

pub fn run_sweep(problem: &Problem, config: &ExperimentConfig, jobs: Option<usize>) -> Result<SweepResult, CliError> {
    let bounds = compute_bounds(problem, config)?;
    let pipelines = bounds.pipelines(config)?;
    let clf = Classifier::Binary(problem.classifier().clone());
    let (rows, stats) = accuracy_sweep(&problem.items(), &problem.stack(), &pipelines, &clf, &config.sweep_options(jobs))?;
    let summary = summarize(&rows, &stats, &bounds, config);
    Ok(SweepResult { bounds, rows, stats, summary })
}
