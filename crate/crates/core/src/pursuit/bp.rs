//! `min_Γ ξ‖Γ‖₁ + ½‖DΓ − y‖₂²` by proximal gradient (ISTA, or FISTA with
//! gradient-based momentum restart).

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::threshold::shrink;
use super::{PursuitError, Result};
use crate::model::{Dictionary, ModelError, SparseCode};

/// The step is `1 / (L·(1 + LIPSCHITZ_MARGIN))`; power iteration approaches
/// the top eigenvalue from below, so the margin keeps the step admissible.
pub const LIPSCHITZ_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Relative objective change below which the solver may stop.
    pub tol: f64,
    /// KKT residual below which the solver stops.
    pub kkt_tol: f64,
    pub acceleration: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-10,
            kkt_tol: 1e-8,
            acceleration: true,
        }
    }
}

impl SolverSettings {
    /// Exactly `iters` iterations with both stopping tests disabled.
    pub fn unrolled(iters: usize, acceleration: bool) -> Self {
        Self {
            max_iters: iters,
            tol: 0.0,
            kkt_tol: 0.0,
            acceleration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(PursuitError::InvalidSchedule("max_iters must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0 && self.kkt_tol.is_finite() && self.kkt_tol >= 0.0) {
            return Err(PursuitError::InvalidSchedule("tolerances must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-layer multipliers `ξ_1 … ξ_K` and the shared solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpSchedule {
    xis: Vec<f64>,
    #[serde(default)]
    solver: SolverSettings,
}

impl BpSchedule {
    pub fn new(xis: Vec<f64>, solver: SolverSettings) -> Result<Self> {
        if xis.is_empty() {
            return Err(PursuitError::InvalidSchedule("no multipliers".into()));
        }
        for &x in &xis {
            check_xi(x)?;
        }
        solver.validate()?;
        Ok(Self { xis, solver })
    }

    pub fn xis(&self) -> &[f64] {
        &self.xis
    }

    pub fn solver(&self) -> &SolverSettings {
        &self.solver
    }

    pub fn depth(&self) -> usize {
        self.xis.len()
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi.is_finite() && xi > 0.0 {
        Ok(())
    } else {
        Err(PursuitError::NonPositiveMultiplier(xi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

/// Record of an unrolled solve, enough to differentiate the returned iterate
/// with respect to the input signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Unfolding {
    step: f64,
    /// Momentum used to form the extrapolated point of each iteration.
    momenta: Vec<f64>,
    /// Coordinates that survived the shrinkage of each iteration.
    active: Vec<Vec<u32>>,
}

impl Unfolding {
    pub fn iterations(&self) -> usize {
        self.momenta.len()
    }

    /// Pulls `∂ℓ/∂Γ̂` (for the returned iterate) back to `∂ℓ/∂y`.
    pub fn backward(&self, d: &Dictionary, grad_code: ArrayView1<f64>) -> Array1<f64> {
        let m = d.cols();
        let gram = d.gram();
        let dm = d.matrix();
        let s = self.step;
        let mut grad_y = Array1::zeros(d.rows());
        // Adjoints of z_{t+1} (complete), z_t and z_{t−1} (partial).
        let mut a_next = grad_code.to_owned();
        let mut a_cur = Array1::<f64>::zeros(m);
        let mut a_prev = Array1::<f64>::zeros(m);
        let mut av = Array1::<f64>::zeros(m);
        for t in (0..self.iterations()).rev() {
            let mt = self.momenta[t];
            av.assign(&Array1::zeros(m));
            for &j in &self.active[t] {
                let j = j as usize;
                let au = a_next[j];
                if au == 0.0 {
                    continue;
                }
                grad_y.scaled_add(s * au, &dm.column(j));
                av[j] += au;
                av.scaled_add(-s * au, &gram.column(j));
            }
            a_cur.scaled_add(1.0 + mt, &av);
            if mt != 0.0 {
                a_prev.scaled_add(-mt, &av);
            }
            std::mem::swap(&mut a_next, &mut a_cur);
            std::mem::swap(&mut a_cur, &mut a_prev);
            a_prev.fill(0.0);
        }
        grad_y
    }
}

#[derive(Debug, Clone)]
pub struct BpSolution {
    pub code: SparseCode,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Objective of every iterate, starting with the zero initialisation.
    pub history: Vec<f64>,
    pub tape: Option<Unfolding>,
}

impl BpSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Turns a `MaxIterations` outcome into an error carrying the iterate.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged() {
            Ok(self)
        } else {
            Err(PursuitError::NotConverged {
                iterations: self.iterations,
                kkt_residual: self.kkt_residual,
                last: Box::new(self),
            })
        }
    }
}

/// `ξ‖Γ‖₁ + ½‖DΓ − y‖₂²`
pub fn lasso_objective(d: &Dictionary, y: ArrayView1<f64>, code: ArrayView1<f64>, xi: f64) -> f64 {
    let r = d.synthesis(code) - y;
    xi * code.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * r.dot(&r)
}

/// Largest violation of the ℓ₁ optimality conditions: `|g_j + ξ·sign(Γ_j)|`
/// on the support and `max(0, |g_j| − ξ)` off it, with `g = Dᵀ(DΓ − y)`.
pub fn kkt_residual(d: &Dictionary, y: ArrayView1<f64>, code: ArrayView1<f64>, xi: f64) -> f64 {
    let g = d.analysis((d.synthesis(code) - y).view());
    kkt_from_gradient(code, g.view(), xi)
}

fn kkt_from_gradient(code: ArrayView1<f64>, g: ArrayView1<f64>, xi: f64) -> f64 {
    code.iter().zip(g.iter()).fold(0.0, |acc: f64, (&z, &gj)| {
        let v = if z != 0.0 {
            (gj + xi * z.signum()).abs()
        } else {
            (gj.abs() - xi).max(0.0)
        };
        acc.max(v)
    })
}

/// Sparse-aware evaluation of `g = DᵀDz − Dᵀy` and `F(z)`.
struct Oracle<'a> {
    d: &'a Dictionary,
    y: ArrayView1<'a, f64>,
    b: Array1<f64>,
    xi: f64,
}

impl Oracle<'_> {
    fn eval(&self, z: &Array1<f64>) -> (Array1<f64>, f64) {
        let gram = self.d.gram();
        let dm = self.d.matrix();
        let mut g = -&self.b;
        let mut r = -&self.y.to_owned();
        let mut l1 = 0.0;
        for (j, &zj) in z.iter().enumerate() {
            if zj != 0.0 {
                g.scaled_add(zj, &gram.column(j));
                r.scaled_add(zj, &dm.column(j));
                l1 += zj.abs();
            }
        }
        (g, self.xi * l1 + 0.5 * r.dot(&r))
    }
}

pub fn bp_pursuit(y: ArrayView1<f64>, d: &Dictionary, xi: f64, solver: &SolverSettings) -> Result<BpSolution> {
    solve(y, d, xi, solver, false)
}

/// As [`bp_pursuit`], additionally recording the unfolding for backprop.
pub fn bp_pursuit_recorded(y: ArrayView1<f64>, d: &Dictionary, xi: f64, solver: &SolverSettings) -> Result<BpSolution> {
    solve(y, d, xi, solver, true)
}

pub(crate) fn solve(y: ArrayView1<f64>, d: &Dictionary, xi: f64, solver: &SolverSettings, record: bool) -> Result<BpSolution> {
    check_xi(xi)?;
    solver.validate()?;
    if y.len() != d.rows() {
        return Err(ModelError::DimensionMismatch {
            context: "signal length vs dictionary rows",
            expected: d.rows(),
            found: y.len(),
        }
        .into());
    }
    let m = d.cols();
    let lipschitz = d.lipschitz() * (1.0 + LIPSCHITZ_MARGIN);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let theta = xi * step;
    let oracle = Oracle {
        d,
        y,
        b: d.analysis(y),
        xi,
    };

    let mut z = Array1::<f64>::zeros(m);
    let mut z_old = z.clone();
    let (mut g, mut f) = oracle.eval(&z);
    let mut g_old = g.clone();
    let mut history = vec![f];
    let mut kkt = kkt_from_gradient(z.view(), g.view(), xi);
    let mut tape = record.then(|| Unfolding {
        step,
        momenta: Vec::new(),
        active: Vec::new(),
    });
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut t_k: f64 = 1.0;
    let mut momentum = 0.0;

    if kkt < solver.kkt_tol {
        status = SolveStatus::Converged;
    } else {
        let mut v = Array1::<f64>::zeros(m);
        let mut next = Array1::<f64>::zeros(m);
        for _ in 0..solver.max_iters {
            // v = z + m(z − z_old); ∇f is affine so ∇f(v) = (1+m)g − m·g_old.
            let mut active = Vec::new();
            for j in 0..m {
                let vj = z[j] + momentum * (z[j] - z_old[j]);
                let gv = (1.0 + momentum) * g[j] - momentum * g_old[j];
                let u = vj - step * gv;
                let nj = shrink(u, theta, false);
                if nj != 0.0 {
                    active.push(j as u32);
                }
                v[j] = vj;
                next[j] = nj;
            }
            if let Some(tape) = tape.as_mut() {
                tape.momenta.push(momentum);
                tape.active.push(active);
            }
            iterations += 1;

            let restart = solver.acceleration
                && v.iter()
                    .zip(next.iter())
                    .zip(z.iter())
                    .map(|((&vj, &nj), &zj)| (vj - nj) * (nj - zj))
                    .sum::<f64>()
                    > 0.0;

            std::mem::swap(&mut z_old, &mut z);
            std::mem::swap(&mut z, &mut next);
            let (g_new, f_new) = oracle.eval(&z);
            g_old = std::mem::replace(&mut g, g_new);
            let rel_change = (f - f_new).abs() / f.abs().max(f64::MIN_POSITIVE);
            f = f_new;
            history.push(f);
            kkt = kkt_from_gradient(z.view(), g.view(), xi);

            if kkt < solver.kkt_tol || (rel_change < solver.tol && kkt < 100.0 * solver.kkt_tol) {
                status = SolveStatus::Converged;
                break;
            }

            momentum = if !solver.acceleration {
                0.0
            } else if restart {
                t_k = 1.0;
                0.0
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
                let mk = (t_k - 1.0) / t_next;
                t_k = t_next;
                mk
            };
        }
    }

    Ok(BpSolution {
        code: SparseCode::from_dense(z),
        status,
        iterations,
        objective: f,
        kkt_residual: kkt,
        history,
        tape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_dictionary(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Dictionary {
        Dictionary::normalized(Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal))).unwrap()
    }

    fn orthonormal_solution(d: &Dictionary, y: ArrayView1<f64>, xi: f64) -> Array1<f64> {
        d.analysis(y).mapv(|v| shrink(v, xi, false))
    }

    /// Cyclic coordinate descent on the same objective, run to a tight
    /// fixed point.
    fn coordinate_descent(d: &Dictionary, y: ArrayView1<f64>, xi: f64) -> Array1<f64> {
        let m = d.cols();
        let mut z = Array1::<f64>::zeros(m);
        let mut r = y.to_owned();
        for _ in 0..20_000 {
            let mut biggest: f64 = 0.0;
            for j in 0..m {
                let col = d.matrix().index_axis(Axis(1), j);
                let rho = col.dot(&r) + z[j];
                let new = shrink(rho, xi, false);
                let delta = new - z[j];
                if delta != 0.0 {
                    r.scaled_add(-delta, &col);
                    z[j] = new;
                }
                biggest = biggest.max(delta.abs());
            }
            if biggest < 1e-14 {
                break;
            }
        }
        z
    }

    #[test]
    fn identity_closed_form() {
        let d = Dictionary::identity(2);
        let sol = bp_pursuit(array![2.0, 0.0].view(), &d, 1.0, &SolverSettings::default()).unwrap();
        assert!(sol.converged());
        assert!((sol.code.values()[0] - 1.0).abs() < 1e-8);
        assert_eq!(sol.code.values()[1], 0.0);
    }

    #[test]
    fn orthonormal_dictionary_decouples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = Dictionary::new(array![[s, s], [s, -s]]).unwrap();
        let y = array![1.7, -0.4];
        let sol = bp_pursuit(y.view(), &d, 0.3, &SolverSettings::default()).unwrap();
        let oracle = orthonormal_solution(&d, y.view(), 0.3);
        for (a, b) in sol.code.values().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_non_positive_multiplier() {
        let d = Dictionary::identity(2);
        for xi in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                bp_pursuit(array![1.0, 0.0].view(), &d, xi, &SolverSettings::default()),
                Err(PursuitError::NonPositiveMultiplier(_))
            ));
        }
        assert!(BpSchedule::new(vec![0.1, 0.0], SolverSettings::default()).is_err());
        assert!(BpSchedule::new(vec![0.1], SolverSettings::unrolled(0, false)).is_err());
    }

    #[test]
    fn saturated_multiplier_gives_zero_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = gaussian_dictionary(&mut rng, 20, 30);
        let y = Array1::from_shape_fn(20, |_| rng.sample::<f64, _>(StandardNormal));
        let bound = d.analysis(y.view()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sol = bp_pursuit(y.view(), &d, bound, &SolverSettings::default()).unwrap();
        assert_eq!(sol.code.l0(), 0);
        assert!(sol.converged());
    }

    #[test]
    fn matches_coordinate_descent_on_overcomplete_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let d = gaussian_dictionary(&mut rng, 100, 150);
        let truth = SparseCode::from_support(150, &[4, 40, 77, 120], &[1.5, -1.2, 1.9, -1.0]).unwrap();
        let y = d.synthesis(truth.values()) + Array1::from_shape_fn(100, |_| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let xi = 0.1;
        let sol = bp_pursuit(y.view(), &d, xi, &SolverSettings::default()).unwrap();
        assert!(sol.converged());
        let cd = coordinate_descent(&d, y.view(), xi);
        let f_cd = lasso_objective(&d, y.view(), cd.view(), xi);
        assert!((sol.objective - f_cd).abs() <= 1e-6, "{} vs {f_cd}", sol.objective);
        assert!(kkt_residual(&d, y.view(), sol.code.values(), xi) <= 1e-6);
    }

    #[test]
    fn ista_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = gaussian_dictionary(&mut rng, 40, 60);
        let y = Array1::from_shape_fn(40, |_| rng.sample::<f64, _>(StandardNormal));
        let settings = SolverSettings {
            acceleration: false,
            ..SolverSettings::default()
        };
        let sol = bp_pursuit(y.view(), &d, 0.2, &settings).unwrap();
        for w in sol.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        assert!(sol.kkt_residual <= 1e-6);
    }

    #[test]
    fn reported_objective_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = gaussian_dictionary(&mut rng, 30, 45);
        let y = Array1::from_shape_fn(30, |_| rng.sample::<f64, _>(StandardNormal));
        let sol = bp_pursuit(y.view(), &d, 0.3, &SolverSettings::default()).unwrap();
        let direct = lasso_objective(&d, y.view(), sol.code.values(), 0.3);
        assert!((sol.objective - direct).abs() < 1e-10);
        assert!((sol.kkt_residual - kkt_residual(&d, y.view(), sol.code.values(), 0.3)).abs() < 1e-10);
    }

    #[test]
    fn unrolled_settings_run_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = gaussian_dictionary(&mut rng, 10, 12);
        let y = Array1::from_shape_fn(10, |_| rng.sample::<f64, _>(StandardNormal));
        let sol = bp_pursuit_recorded(y.view(), &d, 0.05, &SolverSettings::unrolled(17, true)).unwrap();
        assert_eq!(sol.iterations, 17);
        assert_eq!(sol.status, SolveStatus::MaxIterations);
        assert_eq!(sol.tape.as_ref().unwrap().iterations(), 17);
        assert!(matches!(sol.require_converged(), Err(PursuitError::NotConverged { iterations: 17, .. })));
    }

    #[test]
    fn unfolding_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = gaussian_dictionary(&mut rng, 12, 18);
        let y = Array1::from_shape_fn(12, |_| rng.sample::<f64, _>(StandardNormal));
        let probe = Array1::from_shape_fn(18, |_| rng.sample::<f64, _>(StandardNormal));
        for acceleration in [false, true] {
            let settings = SolverSettings::unrolled(60, acceleration);
            let sol = bp_pursuit_recorded(y.view(), &d, 0.1, &settings).unwrap();
            let grad = sol.tape.unwrap().backward(&d, probe.view());
            let h = 1e-6;
            for i in 0..12 {
                let mut yp = y.clone();
                yp[i] += h;
                let mut ym = y.clone();
                ym[i] -= h;
                let fp = probe.dot(&bp_pursuit(yp.view(), &d, 0.1, &settings).unwrap().code.values());
                let fm = probe.dot(&bp_pursuit(ym.view(), &d, 0.1, &settings).unwrap().code.values());
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-5 * fd.abs().max(1.0), "coord {i}: {fd} vs {}", grad[i]);
            }
        }
    }
}
