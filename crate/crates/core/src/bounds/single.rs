use serde_json::json;

use super::{
    check_amplitudes, check_k, check_margin, check_mu, check_nonneg, BoundKind, BoundReport, NoiseNorm, Result, Window,
};

/// One-layer thresholding certificate.
///
/// With `K = kμ|Γmax|` and `C = (k−1)μ|Γmax|`, a perturbation of energy `ε`
/// is covered when `K + ε < β < |Γmin| − C − ε` and
/// `ε < O/(√k‖w‖) − C − β`. For a fixed `β` the supremum of `ε` is the
/// smallest of the three slacks. When `β` is omitted it is chosen to maximise
/// that supremum: `β = (K + min(|Γmin| − C, O/(√k‖w‖) − C)) / 2`, the
/// midpoint between the lower window edge and the tighter of the two upper
/// constraints.
pub fn cor1_thr(
    mu: f64,
    k: usize,
    gamma_min: f64,
    gamma_max: f64,
    w_norm: f64,
    margin: f64,
    beta: Option<f64>,
) -> Result<BoundReport> {
    check_margin(margin)?;
    check_mu(mu)?;
    check_k(k)?;
    check_amplitudes(gamma_min, gamma_max)?;
    check_nonneg("classifier norm", w_norm)?;
    if let Some(b) = beta {
        check_nonneg("threshold", b)?;
    }
    let mut report = BoundReport::new(
        BoundKind::Cor1Thr,
        NoiseNorm::L2,
        json!({
            "mu": mu, "k": k, "gamma_min": gamma_min, "gamma_max": gamma_max,
            "w_norm": w_norm, "margin": margin, "beta": beta,
        }),
    );
    let kf = k as f64;
    let lower = kf * mu * gamma_max;
    let c = (kf - 1.0) * mu * gamma_max;
    let upper = gamma_min - c;
    let margin_cap = margin_slack(margin, w_norm, kf, c);
    report.beta_window = Some(vec![Window { lower, upper }]);
    if mu > 0.0 {
        let ceiling = 0.5 * (1.0 + gamma_min / (gamma_max * mu));
        report.k_max = Some(ceiling.floor() as usize);
        // An empty threshold window below already collapses the bound.
        if kf > ceiling {
            report.notes.push(format!("sparsity {k} exceeds the ceiling {ceiling:.4}"));
        }
    }
    if w_norm == 0.0 {
        report.notes.push("zero classifier norm: only the threshold window limits the noise".into());
    }
    let beta = beta.unwrap_or_else(|| 0.5 * (lower + upper.min(margin_cap)));
    report.betas = Some(vec![beta]);
    let eps = (beta - lower).min(upper - beta).min(margin_cap - beta);
    report.settle(eps);
    if !report.feasible {
        report.notes.push("threshold window and margin leave no room for noise: the bound collapses to zero".into());
    }
    report.eps_chain = Some(vec![kf.sqrt() * (report.eps_max + c + beta)]);
    Ok(report)
}

/// `O/(√k‖w‖) − C`, infinite for a zero classifier.
pub(super) fn margin_slack(margin: f64, w_norm: f64, l0: f64, c: f64) -> f64 {
    if w_norm == 0.0 {
        f64::INFINITY
    } else {
        margin / (w_norm * l0.sqrt()) - c
    }
}

/// One-layer basis-pursuit certificate: when `k ≤ (1 + 1/μ)/3` and
/// `ξ = 4ε`, the estimate is within `7.5ε` of the true code, so the decision
/// is kept for `ε < O/(7.5·k·‖w‖)`.
pub fn cor2_bp(mu: f64, k: usize, w_norm: f64, margin: f64) -> Result<BoundReport> {
    check_margin(margin)?;
    check_mu(mu)?;
    check_k(k)?;
    check_nonneg("classifier norm", w_norm)?;
    let mut report = BoundReport::new(
        BoundKind::Cor2Bp,
        NoiseNorm::L2,
        json!({ "mu": mu, "k": k, "w_norm": w_norm, "margin": margin }),
    );
    if mu > 0.0 {
        let ceiling = (1.0 + 1.0 / mu) / 3.0;
        report.k_max = Some(ceiling.floor() as usize);
        if k as f64 > ceiling {
            report.notes.push(format!("sparsity {k} exceeds the ceiling {ceiling:.4}"));
            return Ok(report);
        }
    }
    if w_norm == 0.0 {
        report.degenerate("zero classifier norm: no perturbation can change the decision");
        return Ok(report);
    }
    report.settle(margin / (7.5 * k as f64 * w_norm));
    report.xi_schedule = Some(vec![4.0 * report.eps_max]);
    report.eps_chain = Some(vec![7.5 * report.eps_max]);
    Ok(report)
}

impl BoundReport {
    /// The threshold a thresholding certificate was evaluated with.
    pub fn beta(&self) -> Option<f64> {
        self.betas.as_ref().and_then(|b| b.last().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::BoundStatus;

    #[test]
    fn reference_value_cor2() {
        let r = cor2_bp(0.02, 4, 1.0, 1.0).unwrap();
        assert!((r.eps_max - 1.0 / 30.0).abs() < 1e-15);
        assert!((r.xi_schedule.unwrap()[0] - 4.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn cor2_sparsity_premise() {
        let r = cor2_bp(0.3, 4, 1.0, 1.0).unwrap();
        assert_eq!(r.status, BoundStatus::Infeasible);
        assert_eq!(r.k_max, Some(1));
        assert_eq!(cor2_bp(0.1, 4, 1.0, 1.0).unwrap().k_max, Some(3));
    }

    #[test]
    fn cor2_zero_classifier_is_degenerate() {
        assert_eq!(cor2_bp(0.01, 2, 0.0, 1.0).unwrap().status, BoundStatus::Degenerate);
    }

    /// Brute-force maximisation of the three-slack minimum over a β grid.
    fn grid_optimum(mu: f64, k: usize, gmin: f64, gmax: f64, w: f64, o: f64) -> f64 {
        let kf = k as f64;
        let lower = kf * mu * gmax;
        let c = (kf - 1.0) * mu * gmax;
        let n = 200_000;
        (0..=n)
            .map(|i| {
                let beta = gmin * i as f64 / n as f64;
                (beta - lower).min(gmin - c - beta).min(o / (kf.sqrt() * w) - c - beta)
            })
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    #[test]
    fn zero_coherence_matches_grid_search() {
        for (k, gmin, w, o) in [(4, 1.0, 1.0, 1.0), (1, 0.5, 2.0, 3.0), (9, 1.0, 0.5, 4.0)] {
            let r = cor1_thr(0.0, k, gmin, 2.0 * gmin, w, o, None).unwrap();
            let oracle = grid_optimum(0.0, k, gmin, 2.0 * gmin, w, o);
            assert!((r.eps_max - oracle).abs() < 1e-5, "{} vs {oracle}", r.eps_max);
        }
    }

    #[test]
    fn positive_coherence_matches_grid_search() {
        for (mu, k) in [(0.03, 4), (0.01, 2), (0.05, 3)] {
            let r = cor1_thr(mu, k, 1.0, 2.0, 1.0, 1.0, None).unwrap();
            let oracle = grid_optimum(mu, k, 1.0, 2.0, 1.0, 1.0);
            assert!((r.eps_max - oracle).abs() < 1e-5, "mu={mu}: {} vs {oracle}", r.eps_max);
        }
    }

    #[test]
    fn explicit_threshold_uses_the_smallest_slack() {
        let r = cor1_thr(0.03, 4, 1.0, 2.0, 1.0, 1.0, Some(0.27)).unwrap();
        // lower edge 0.24, margin cap 0.5 − 0.18 = 0.32
        assert!((r.eps_max - 0.03).abs() < 1e-12);
        let r = cor1_thr(0.03, 4, 1.0, 2.0, 1.0, 1.0, Some(0.2)).unwrap();
        assert!(!r.feasible);
    }

    #[test]
    fn overcomplete_setting_collapses() {
        let r = cor1_thr(0.08, 4, 1.0, 2.0, 1.0, 1.0, None).unwrap();
        assert_eq!(r.status, BoundStatus::Infeasible);
        assert_eq!(r.eps_max, 0.0);
    }

    #[test]
    fn sparsity_above_ceiling_is_infeasible() {
        // ceiling ½(1 + 1/(2·0.1)) = 3
        let r = cor1_thr(0.1, 4, 1.0, 2.0, 1.0, 10.0, None).unwrap();
        assert_eq!(r.k_max, Some(3));
        assert!(!r.feasible);
    }
}
