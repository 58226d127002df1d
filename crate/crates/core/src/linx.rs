//! The linx bound
//!
//! `max { 1/2 (ldet(gamma C diag(x) C + I - diag(x)) - s log gamma) : e'x = s, 0 <= x <= e }`
//!
//! and Newton tuning of `psi = log gamma`.

use std::time::Instant;

use crate::barrier::{self, BarrierOptions, Eval, SliceObjective};
use crate::error::{MespError, Result};
use crate::instance::CovarianceInstance;
use crate::linalg::{self, Cholesky, SymMatrix};
use crate::report::{BoundReport, Flag, MixParams, TrailEntry};

pub const DEFAULT_TOL: f64 = 1e-7;

/// `F(gamma, x) = gamma C diag(x) C + I - diag(x)`.
pub fn linx_matrix(c: &SymMatrix, gamma: f64, x: &[f64]) -> SymMatrix {
    let n = c.n();
    let mut f = SymMatrix::from_fn(n, |i, j| {
        gamma * (0..n).map(|k| c[(i, k)] * x[k] * c[(k, j)]).sum::<f64>()
    });
    f.add_diag(&x.iter().map(|v| 1.0 - v).collect::<Vec<_>>());
    f
}

pub(crate) fn check_slice_point(x: &[f64], n: usize, s: f64) -> Result<()> {
    if x.len() != n {
        return Err(MespError::DimensionMismatch { expected: n, found: x.len() });
    }
    if let Some(v) = x.iter().find(|v| !(**v >= -1e-7 && **v <= 1.0 + 1e-7)) {
        return Err(MespError::Infeasible(format!("entry {v} outside [0, 1]")));
    }
    let sum: f64 = x.iter().sum();
    if (sum - s).abs() > 1e-7 {
        return Err(MespError::Infeasible(format!("e'x = {sum}, expected {s}")));
    }
    Ok(())
}

/// Linx objective for fixed `(C, s, gamma)`, optionally weighted.
pub struct LinxObjective<'a> {
    pub c: &'a SymMatrix,
    pub s: usize,
    pub gamma: f64,
    pub weight: f64,
}

impl LinxObjective<'_> {
    fn parts(&self, x: &[f64]) -> Result<(Cholesky, SymMatrix)> {
        let f = linx_matrix(self.c, self.gamma, x);
        let ch = Cholesky::factor(&f)?;
        let g = ch.inverse();
        Ok((ch, g))
    }
}

impl SliceObjective for LinxObjective<'_> {
    fn known_concave(&self) -> bool {
        true
    }

    fn dim(&self) -> usize {
        self.c.n()
    }

    fn eval(&self, x: &[f64], hessian: bool) -> Result<Eval> {
        let n = self.c.n();
        let gamma = self.gamma;
        let w = self.weight;
        let (ch, g) = self.parts(x)?;
        let value = w * 0.5 * (ch.ldet() - self.s as f64 * gamma.ln());
        let r = self.c.matmul(&g)?; // C G
        let p = r.matmul(&self.c.to_matrix())?; // C G C
        let grad = (0..n).map(|i| w * 0.5 * (gamma * p[(i, i)] - g[(i, i)])).collect();
        let hess = hessian.then(|| {
            SymMatrix::from_fn(n, |i, j| {
                let t = gamma * gamma * p[(i, j)] * p[(i, j)] - gamma * r[(i, j)] * r[(i, j)]
                    - gamma * r[(j, i)] * r[(j, i)]
                    + g[(i, j)] * g[(i, j)];
                -0.5 * w * t
            })
        });
        Ok(Eval { value, grad, hess })
    }
}

/// `1/2 (ldet F(gamma, x) - s log gamma)` at a feasible `x`.
pub fn linx_objective(inst: &CovarianceInstance, s: usize, gamma: f64, x: &[f64]) -> Result<f64> {
    check_gamma(gamma)?;
    check_slice_point(x, inst.n(), s as f64)?;
    let f = linx_matrix(inst.cov(), gamma, x);
    Ok(0.5 * (linalg::ldet(&f)? - s as f64 * gamma.ln()))
}

pub fn linx_gradient(inst: &CovarianceInstance, s: usize, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    check_slice_point(x, inst.n(), s as f64)?;
    let obj = LinxObjective { c: inst.cov(), s, gamma, weight: 1.0 };
    Ok(obj.eval(x, false)?.grad)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(MespError::InvalidParam(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Solver knobs shared by [`solve_linx_with`] callers.
#[derive(Clone, Debug)]
pub struct LinxSolve<'a> {
    pub weight: f64,
    pub tilt: Option<&'a [f64]>,
    pub start: Option<&'a [f64]>,
    pub options: BarrierOptions,
}

impl Default for LinxSolve<'_> {
    fn default() -> Self {
        LinxSolve { weight: 1.0, tilt: None, start: None, options: BarrierOptions::default() }
    }
}

/// Linx bound at fixed `gamma`. `value` is the primal objective at the
/// returned point; `dual_value` is a certified over-estimate of the maximum.
pub fn solve_linx(inst: &CovarianceInstance, s: usize, gamma: f64, tol: f64) -> Result<BoundReport> {
    let opts = BarrierOptions { tol, ..BarrierOptions::default() };
    solve_linx_with(inst, s, gamma, &LinxSolve { options: opts, ..LinxSolve::default() })
}

/// Maximizes `weight * linx(x) - tilt'x`.
pub fn solve_linx_with(inst: &CovarianceInstance, s: usize, gamma: f64, cfg: &LinxSolve) -> Result<BoundReport> {
    check_gamma(gamma)?;
    let n = inst.n();
    if s > n {
        return Err(MespError::InvalidParam(format!("s = {s} exceeds n = {n}")));
    }
    let started = Instant::now();
    let zeros = vec![0.0; n];
    let tilt = cfg.tilt.unwrap_or(&zeros);
    let params = MixParams { alpha: 0.0, psi1: gamma.ln(), psi2: 0.0 };
    if s == 0 || s == n {
        let x = vec![if s == n { 1.0 } else { 0.0 }; n];
        let base = if s == n { inst.ldet_c() } else { 0.0 };
        let value = cfg.weight * base - linalg::dot(tilt, &x);
        let mut rep = BoundReport::new(value, x);
        rep.dual_value = Some(value);
        rep.params = params;
        rep.wall_time = started.elapsed();
        return Ok(rep);
    }
    let obj = LinxObjective { c: inst.cov(), s, gamma, weight: cfg.weight };
    let sol = barrier::maximize_on_slice(&obj, s, tilt, cfg.start, &cfg.options)?;
    let mut rep = BoundReport::new(sol.primal, sol.x);
    rep.dual_value = Some(sol.dual);
    rep.kkt_residual = (sol.dual - sol.primal).max(0.0);
    rep.iterations = sol.iterations;
    rep.params = params;
    if !sol.converged {
        rep.flag(Flag::MaxIterations);
    }
    rep.wall_time = started.elapsed();
    Ok(rep)
}

/// `G(psi) = n - s - F^{-1} • (I - diag x)` and
/// `H_G(psi) = gamma (e - x)' diag(F^{-1} C diag(x) C F^{-1})`, both with `x`
/// held fixed.
pub fn psi_derivatives(inst: &CovarianceInstance, s: usize, psi: f64, x: &[f64]) -> Result<(f64, f64)> {
    let n = inst.n();
    let gamma = psi.exp();
    let c = inst.cov();
    let f = linx_matrix(c, gamma, x);
    let g = linalg::inverse(&f)?;
    let g_val = (n - s) as f64 - (0..n).map(|i| g[(i, i)] * (1.0 - x[i])).sum::<f64>();
    let cxc = SymMatrix::from_fn(n, |i, j| (0..n).map(|k| c[(i, k)] * x[k] * c[(k, j)]).sum());
    let m = g.matmul(&cxc)?.matmul(&g.to_matrix())?;
    let h_val = gamma * (0..n).map(|i| (1.0 - x[i]) * m[(i, i)]).sum::<f64>();
    Ok((g_val, h_val))
}

/// `v(gamma, x) = ldet F(gamma, x) - s log gamma` (twice the linx objective).
pub fn v_value(inst: &CovarianceInstance, s: usize, gamma: f64, x: &[f64]) -> Result<f64> {
    let f = linx_matrix(inst.cov(), gamma, x);
    Ok(linalg::ldet(&f)? - s as f64 * gamma.ln())
}

#[derive(Clone, Debug)]
pub struct LinxTuning {
    pub psi: f64,
    /// Linx bound value at `psi` (half of `H(psi)`).
    pub value: f64,
    /// `|G(psi)|` at termination.
    pub g_abs: f64,
    pub iterations: usize,
    pub report: BoundReport,
    pub trail: Vec<TrailEntry>,
}

fn tuning_inner_options(tol: f64) -> BarrierOptions {
    BarrierOptions { tol: (tol * 1e-3).min(1e-10), mu_min: 1e-13, ..BarrierOptions::default() }
}

const MAX_PSI_ITERS: usize = 50;
/// Largest accepted `|delta psi|` per Newton step.
const MAX_PSI_STEP: f64 = 2.0;
/// `psi` stays within this distance of its start; the bound can keep
/// decreasing towards an infimum at `gamma -> 0` or `gamma -> inf`.
const MAX_PSI_TRAVEL: f64 = 30.0;

/// Minimizes `H(psi) = max_x v(exp psi, x)` by damped, clamped Newton steps
/// on `G(psi) = 0`, re-solving the inner problem at every trial `psi`.
pub fn tune_linx_gamma(inst: &CovarianceInstance, s: usize, psi0: f64, tol: f64) -> Result<LinxTuning> {
    if !psi0.is_finite() {
        return Err(MespError::InvalidParam("psi0 must be finite".into()));
    }
    let n = inst.n();
    let inner = LinxSolve { options: tuning_inner_options(tol), ..LinxSolve::default() };
    let solve_at = |psi: f64| -> Result<(BoundReport, f64, f64)> {
        let rep = solve_linx_with(inst, s, psi.exp(), &inner)?;
        let (g, h) = if s == 0 || s == n { (0.0, 1.0) } else { psi_derivatives(inst, s, psi, &rep.optimizer_x)? };
        Ok((rep, g, h))
    };
    let mut psi = psi0;
    let (mut rep, mut g, mut h) = solve_at(psi)?;
    let mut trail = vec![TrailEntry { k: 0, alpha: 0.0, psi1: psi, psi2: 0.0, value: rep.value, residual: g, g_norm: g.abs() }];
    let mut iterations = 0;
    while g.abs() > tol {
        if iterations >= MAX_PSI_ITERS {
            rep.flag(Flag::MaxIterations);
            break;
        }
        iterations += 1;
        if !(h > 1e-14) {
            rep.flag(Flag::SingularCurvature);
            break;
        }
        let step = (-g / h).clamp(-MAX_PSI_STEP, MAX_PSI_STEP);
        if !step.is_finite() {
            return Err(MespError::NonfiniteStep);
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = (psi + t * step).clamp(psi0 - MAX_PSI_TRAVEL, psi0 + MAX_PSI_TRAVEL);
            if trial == psi {
                break;
            }
            let (r2, g2, h2) = match solve_at(trial) {
                Ok(v) => v,
                // numerically out of reach at this scaling
                Err(MespError::ConcavityViolation | MespError::NotPositiveDefinite { .. } | MespError::NonfiniteStep) => {
                    t *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if r2.value <= rep.value + 1e-13 * rep.value.abs().max(1.0) || g2.abs() < g.abs() {
                psi = trial;
                rep = r2;
                g = g2;
                h = h2;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        trail.push(TrailEntry { k: iterations, alpha: 0.0, psi1: psi, psi2: 0.0, value: rep.value, residual: g, g_norm: g.abs() });
        if !moved {
            rep.flag(Flag::NonMonotoneStep);
            break;
        }
    }
    Ok(LinxTuning { psi, value: rep.value, g_abs: g.abs(), iterations, report: rep, trail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_random_pd;
    use approx::assert_relative_eq;

    fn inst(rows: &[Vec<f64>]) -> CovarianceInstance {
        CovarianceInstance::from_rows(rows).unwrap()
    }

    #[test]
    fn objective_examples() {
        let id = CovarianceInstance::new(SymMatrix::identity(4), "").unwrap();
        assert_relative_eq!(linx_objective(&id, 2, 1.0, &[0.5, 0.2, 0.8, 0.5]).unwrap(), 0.0, epsilon = 1e-14);
        let c2 = inst(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert_relative_eq!(linx_objective(&c2, 1, 1.0, &[0.5, 0.5]).unwrap(), 0.5 * 5f64.ln(), epsilon = 1e-14);
        let d = CovarianceInstance::new(SymMatrix::from_diag(&[1.5, 2.0, 0.7, 3.0]), "").unwrap();
        for gamma in [0.3, 1.0, 4.0] {
            let v = linx_objective(&d, 2, gamma, &[0.0, 1.0, 0.0, 1.0]).unwrap();
            assert_relative_eq!(v, 2f64.ln() + 3f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn infeasible_points_rejected() {
        let id = CovarianceInstance::new(SymMatrix::identity(3), "").unwrap();
        assert!(matches!(linx_objective(&id, 2, 1.0, &[0.5, 0.5, 0.5]), Err(MespError::Infeasible(_))));
        assert!(matches!(linx_objective(&id, 1, 1.0, &[1.5, -0.5, 0.0]), Err(MespError::Infeasible(_))));
        assert!(matches!(linx_objective(&id, 1, 0.0, &[1.0, 0.0, 0.0]), Err(MespError::InvalidParam(_))));
    }

    #[test]
    fn gradient_closed_forms() {
        let id = CovarianceInstance::new(SymMatrix::identity(3), "").unwrap();
        let g = linx_gradient(&id, 1, 1.0, &[0.2, 0.3, 0.5]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
        let c = [1.5, 2.0, 0.7];
        let d = CovarianceInstance::new(SymMatrix::from_diag(&c), "").unwrap();
        let x = [0.3, 0.9, 0.8];
        let gamma = 1.7;
        let g = linx_gradient(&d, 2, gamma, &x).unwrap();
        for i in 0..3 {
            let a = gamma * c[i] * c[i] - 1.0;
            assert_relative_eq!(g[i], 0.5 * a / (1.0 + a * x[i]), epsilon = 1e-13);
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let inst = gen_random_pd(5, 11, 20.0).unwrap();
        let obj = LinxObjective { c: inst.cov(), s: 2, gamma: 0.8, weight: 1.0 };
        let x = [0.3, 0.5, 0.4, 0.6, 0.2];
        let h = obj.eval(&x, true).unwrap().hess.unwrap();
        let step = 1e-6;
        for j in 0..5 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += step;
            xm[j] -= step;
            let gp = obj.eval(&xp, false).unwrap().grad;
            let gm = obj.eval(&xm, false).unwrap().grad;
            for i in 0..5 {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!((fd - h[(i, j)]).abs() <= 1e-6 * h[(i, j)].abs().max(1.0), "H[{i},{j}]: fd {fd} vs {}", h[(i, j)]);
            }
        }
    }

    #[test]
    fn solve_identity_is_zero() {
        let id = CovarianceInstance::new(SymMatrix::identity(5), "").unwrap();
        let rep = solve_linx(&id, 2, 1.0, 1e-7).unwrap();
        assert!(rep.value.abs() < 1e-7);
        assert!(rep.upper_bound() >= -1e-12);
    }

    #[test]
    fn solve_diag_dominates_oracle() {
        let d = CovarianceInstance::new(SymMatrix::from_diag(&[1.0, 2.0, 4.0]), "").unwrap();
        let rep = solve_linx(&d, 2, 1.0, 1e-7).unwrap();
        assert!(rep.value >= 8f64.ln() - 1e-7, "{}", rep.value);
    }

    #[test]
    fn edge_cardinalities_short_circuit() {
        let inst = gen_random_pd(4, 2, 10.0).unwrap();
        assert_relative_eq!(solve_linx(&inst, 4, 1.0, 1e-7).unwrap().value, inst.ldet_c(), epsilon = 1e-14);
        assert_eq!(solve_linx(&inst, 0, 1.0, 1e-7).unwrap().value, 0.0);
    }

    #[test]
    fn tune_identity_stays_at_zero() {
        let id = CovarianceInstance::new(SymMatrix::identity(6), "").unwrap();
        let t = tune_linx_gamma(&id, 2, 0.0, 1e-6).unwrap();
        assert!(t.psi.abs() < 1e-6);
        assert_eq!(t.iterations, 0);
    }

    #[test]
    fn tune_improves_on_unit_gamma() {
        let d = CovarianceInstance::new(SymMatrix::from_diag(&[1.0, 2.0, 4.0]), "").unwrap();
        let t = tune_linx_gamma(&d, 2, 0.0, 1e-6).unwrap();
        let base = solve_linx(&d, 2, 1.0, 1e-9).unwrap().value;
        assert!(t.value <= base + 1e-9);
        assert!(t.g_abs <= 1e-6);
    }
}
