use serde_json::json;

use super::{check_k, check_margin, check_mu, check_nonneg, BoundKind, BoundReport, NoiseNorm, Result};

/// Shared algebra of the single-layer problem bounds: with spread `s`
/// (classifier norm or multi-class distance) and margin `O`,
/// `ε_max = O/(2s)·√(1 − δ)`, and for a given `ε` the sparsity must satisfy
/// `‖Γ‖ < ½(1 + (1 − (2sε/O)²)/μ)`.
fn problem_bound(kind: BoundKind, mu: Option<f64>, delta: f64, k: Option<usize>, spread: f64, margin: f64, eps: Option<f64>) -> BoundReport {
    let mut report = BoundReport::new(
        kind,
        NoiseNorm::L2,
        json!({ "mu": mu, "k": k, "delta_2k": delta, "spread": spread, "margin_star": margin, "eps": eps }),
    );
    if spread == 0.0 {
        report.degenerate("zero classifier spread: no perturbation can change the decision");
        return report;
    }
    if delta < 1.0 {
        report.settle(margin / (2.0 * spread) * (1.0 - delta).sqrt());
    } else {
        report.notes.push(format!("isometry surrogate {delta} is not below 1"));
    }
    if let (Some(mu), Some(eps)) = (mu, eps) {
        if mu == 0.0 {
            report.notes.push("zero coherence: no sparsity ceiling".into());
        } else {
            let ratio = 2.0 * spread * eps / margin;
            let ceiling = 0.5 * (1.0 + (1.0 - ratio * ratio) / mu);
            // largest integer strictly below the ceiling
            report.k_max = Some(if ceiling <= 0.0 { 0 } else { (ceiling.ceil() as usize).saturating_sub(1) });
        }
    }
    report
}

/// Binary certificate in terms of a known (or estimated) isometry constant
/// `δ_2k`. A Monte-Carlo lower estimate of `δ_2k` yields an optimistic bound.
pub fn thm5_srip(delta_2k: f64, w_norm: f64, margin_star: f64) -> Result<BoundReport> {
    check_margin(margin_star)?;
    check_nonneg("isometry constant", delta_2k)?;
    check_nonneg("classifier norm", w_norm)?;
    Ok(problem_bound(BoundKind::Thm5Srip, None, delta_2k, None, w_norm, margin_star, None))
}

/// Binary certificate with the coherence surrogate `δ_2k ≤ (2k−1)μ`. When
/// `eps` is given, `k_max` is the sparsity ceiling at that noise level.
pub fn thm5_binary(mu: f64, k: usize, w_norm: f64, margin_star: f64, eps: Option<f64>) -> Result<BoundReport> {
    mu_bound(BoundKind::Thm5Mu, mu, k, w_norm, margin_star, eps)
}

/// Multi-class certificate: the binary algebra with `‖w‖` replaced by the
/// largest distance between class vectors `φ(W)` and the binary margin by the
/// multi-class one.
pub fn thm7_multiclass(mu: f64, k: usize, phi: f64, margin_star: f64, eps: Option<f64>) -> Result<BoundReport> {
    mu_bound(BoundKind::Thm7Mu, mu, k, phi, margin_star, eps)
}

fn mu_bound(kind: BoundKind, mu: f64, k: usize, spread: f64, margin: f64, eps: Option<f64>) -> Result<BoundReport> {
    check_margin(margin)?;
    check_mu(mu)?;
    check_k(k)?;
    check_nonneg("classifier spread", spread)?;
    if let Some(e) = eps {
        check_nonneg("noise level", e)?;
    }
    let delta = (2 * k - 1) as f64 * mu;
    let mut report = problem_bound(kind, Some(mu), delta, Some(k), spread, margin, eps);
    if kind == BoundKind::Thm7Mu {
        if let Some(obj) = report.inputs.as_object_mut() {
            obj.insert("phi".into(), obj["spread"].clone());
            obj.insert("margin_star_m".into(), obj["margin_star"].clone());
        }
    } else if let Some(obj) = report.inputs.as_object_mut() {
        obj.insert("w_norm".into(), obj["spread"].clone());
    }
    Ok(report)
}
