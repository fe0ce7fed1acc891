use serde::{Deserialize, Serialize};

use super::single::margin_slack;
use super::{
    check_amplitudes, check_k, check_margin, check_mu, check_nonneg, BoundKind, BoundReport, BoundsError, NoiseNorm,
    Result, Window,
};

/// Per-layer parameters of the layered-thresholding certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrLayer {
    pub mu: f64,
    /// Stripe sparsity `‖Γ_i‖₀,∞`.
    pub k: usize,
    /// Patch sparsity `‖Γ_i‖₀,∞^P`, which drives the noise propagation.
    pub k_patch: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Threshold for this layer; chosen automatically when absent.
    #[serde(default)]
    pub beta: Option<f64>,
}

impl ThrLayer {
    fn lower_offset(&self) -> f64 {
        self.k as f64 * self.mu * self.gamma_max
    }

    fn c(&self) -> f64 {
        (self.k as f64 - 1.0) * self.mu * self.gamma_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LthrInputs {
    pub layers: Vec<ThrLayer>,
    /// Local input noise level `‖E‖₂,∞ ≤ ε₀`.
    pub eps0: f64,
    pub w_norm: f64,
    /// `‖Γ_K‖₀` of the deepest code.
    pub l0: usize,
    pub margin: f64,
}

/// Layered-thresholding certificate.
///
/// The noise chain is `ε_i = √k_i^P (ε_{i−1} + C_i + β_i)`, with
/// `C_i = (k_i−1)μ_i|Γ_i^max|`. Layer `i` needs `β_i` inside
/// `(k_iμ_i|Γ_i^max| + ε_{i−1}, |Γ_i^min| − C_i − ε_{i−1})` (which also
/// enforces the sparsity ceiling), and the deepest layer needs
/// `O* > ‖w‖√‖Γ_K‖₀ (ε_{K−1} + C_K + β_K)`.
///
/// Because every `ε_i` is affine in `ε₀`, the largest admissible `ε₀` is
/// found in closed form. Missing thresholds are filled in from the noiseless
/// chain: the window midpoint on inner layers and, on the deepest layer, the
/// midpoint between the lower edge and the tighter of the window's upper edge
/// and the margin constraint.
pub fn thm10_lthr(inputs: &LthrInputs) -> Result<BoundReport> {
    check_margin(inputs.margin)?;
    check_nonneg("input noise", inputs.eps0)?;
    check_nonneg("classifier norm", inputs.w_norm)?;
    check_k(inputs.l0)?;
    if inputs.layers.is_empty() {
        return Err(BoundsError::InvalidParameter("at least one layer is required".into()));
    }
    for layer in &inputs.layers {
        check_mu(layer.mu)?;
        check_k(layer.k)?;
        check_k(layer.k_patch)?;
        check_amplitudes(layer.gamma_min, layer.gamma_max)?;
        if let Some(b) = layer.beta {
            check_nonneg("threshold", b)?;
        }
    }
    let mut report = BoundReport::new(
        BoundKind::Thm10Lthr,
        NoiseNorm::PatchL2Inf,
        serde_json::to_value(inputs).unwrap_or(serde_json::Value::Null),
    );
    let depth = inputs.layers.len();
    let l0 = inputs.l0 as f64;

    // ε_i = a_i + b_i·ε₀
    let mut a_prev = 0.0;
    let mut b_prev = 1.0;
    let mut betas = Vec::with_capacity(depth);
    let mut eps_max = f64::INFINITY;
    let mut failing = None;
    for (i, layer) in inputs.layers.iter().enumerate() {
        let lower = layer.lower_offset() + a_prev;
        let upper = layer.gamma_min - layer.c() - a_prev;
        let last = i + 1 == depth;
        let margin_cap = if last {
            margin_slack(inputs.margin, inputs.w_norm, l0, layer.c()) - a_prev
        } else {
            f64::INFINITY
        };
        let beta = layer
            .beta
            .unwrap_or_else(|| 0.5 * (lower + upper.min(margin_cap)));
        betas.push(beta);
        let slack = ((beta - lower) / b_prev)
            .min((upper - beta) / b_prev)
            .min((margin_cap - beta) / b_prev);
        if (slack.is_nan() || slack <= 0.0) && failing.is_none() {
            failing = Some(i + 1);
        }
        eps_max = eps_max.min(slack);
        let root = (layer.k_patch as f64).sqrt();
        a_prev = root * (a_prev + layer.c() + beta);
        b_prev *= root;
    }
    report.betas = Some(betas.clone());
    report.settle(eps_max);
    report.failing_layer = failing;
    if inputs.w_norm == 0.0 {
        report.notes.push("zero classifier norm: only the threshold windows limit the noise".into());
    }

    // Direct evaluation at the given noise level.
    let mut eps_prev = inputs.eps0;
    let mut chain = Vec::with_capacity(depth);
    let mut windows = Vec::with_capacity(depth);
    let mut holds = true;
    for (i, (layer, &beta)) in inputs.layers.iter().zip(&betas).enumerate() {
        let window = Window {
            lower: layer.lower_offset() + eps_prev,
            upper: layer.gamma_min - layer.c() - eps_prev,
        };
        let sparsity_ok = (2.0 * layer.k as f64 - 1.0) * layer.mu * layer.gamma_max + 2.0 * eps_prev < layer.gamma_min;
        holds &= sparsity_ok && window.contains(beta);
        if i + 1 == depth {
            holds &= inputs.margin > inputs.w_norm * l0.sqrt() * (eps_prev + layer.c() + beta);
        }
        windows.push(window);
        eps_prev = (layer.k_patch as f64).sqrt() * (eps_prev + layer.c() + beta);
        chain.push(eps_prev);
    }
    report.beta_window = Some(windows);
    report.eps_chain = Some(chain);
    report.holds_at_input = Some(holds);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbpLayer {
    pub mu: f64,
    /// Stripe sparsity `‖Γ_i‖₀,∞`.
    pub k: usize,
    /// Patch sparsity `‖Γ_i‖₀,∞^P`.
    pub k_patch: usize,
}

/// How the deepest noise level is compared with the margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbpMarginRule {
    /// `O* > ‖w‖√‖Γ_K‖₀ ε_K`; with one layer this is exactly the one-layer
    /// basis-pursuit certificate.
    #[default]
    Consistent,
    /// `O* > 7.5‖w‖√‖Γ_K‖₀ ε_K`, an additional factor 7.5 on top of the chain.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbpInputs {
    pub layers: Vec<LbpLayer>,
    /// Local input noise level `‖E‖₂,∞`.
    pub eps_local: f64,
    pub w_norm: f64,
    pub l0: usize,
    pub margin: f64,
    #[serde(default)]
    pub rule: LbpMarginRule,
}

/// Layered basis-pursuit certificate: each layer needs
/// `k_i ≤ (1 + 1/μ_i)/3`, the multipliers are `ξ_i = 4ε_{i−1}`, and the noise
/// chain is `ε_i = ‖E‖·7.5^i·∏_{j≤i} √k_j^P`.
pub fn thm11_lbp(inputs: &LbpInputs) -> Result<BoundReport> {
    check_margin(inputs.margin)?;
    check_nonneg("input noise", inputs.eps_local)?;
    check_nonneg("classifier norm", inputs.w_norm)?;
    check_k(inputs.l0)?;
    if inputs.layers.is_empty() {
        return Err(BoundsError::InvalidParameter("at least one layer is required".into()));
    }
    for layer in &inputs.layers {
        check_mu(layer.mu)?;
        check_k(layer.k)?;
        check_k(layer.k_patch)?;
    }
    let mut report = BoundReport::new(
        BoundKind::Thm11Lbp,
        NoiseNorm::PatchL2Inf,
        serde_json::to_value(inputs).unwrap_or(serde_json::Value::Null),
    );
    let mut ceiling_min = usize::MAX;
    for (i, layer) in inputs.layers.iter().enumerate() {
        if layer.mu > 0.0 {
            let ceiling = (1.0 + 1.0 / layer.mu) / 3.0;
            ceiling_min = ceiling_min.min(ceiling.floor() as usize);
            if layer.k as f64 > ceiling && report.failing_layer.is_none() {
                report.failing_layer = Some(i + 1);
                report
                    .notes
                    .push(format!("layer {}: sparsity {} exceeds the ceiling {ceiling:.4}", i + 1, layer.k));
            }
        }
    }
    if ceiling_min != usize::MAX {
        report.k_max = Some(ceiling_min);
    }

    let mut gain = 1.0;
    let mut chain = Vec::with_capacity(inputs.layers.len());
    let mut xis = Vec::with_capacity(inputs.layers.len());
    for layer in &inputs.layers {
        xis.push(4.0 * inputs.eps_local * gain);
        gain *= 7.5 * (layer.k_patch as f64).sqrt();
        chain.push(inputs.eps_local * gain);
    }
    report.xi_schedule = Some(xis);
    report.eps_chain = Some(chain);

    if report.failing_layer.is_some() {
        report.holds_at_input = Some(false);
        return Ok(report);
    }
    if inputs.w_norm == 0.0 {
        report.degenerate("zero classifier norm: no perturbation can change the decision");
        report.holds_at_input = Some(true);
        return Ok(report);
    }
    let extra = match inputs.rule {
        LbpMarginRule::Consistent => 1.0,
        LbpMarginRule::Literal => 7.5,
    };
    report.settle(inputs.margin / (extra * inputs.w_norm * (inputs.l0 as f64).sqrt() * gain));
    report.holds_at_input = Some(report.certifies(inputs.eps_local));
    Ok(report)
}
