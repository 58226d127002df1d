//! NLP bound, its complement, and the mixed NLP bound, solved by long-step
//! barrier path following with a dual certificate.
//!
//! `f(x) = ldet(gamma X^{p/2} (C - D) X^{p/2} + (gamma D)^x) - s log gamma`
//! with `X = diag(x)` and entrywise powers on diagonal matrices.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierOptions, Eval, SliceObjective};
use crate::error::{MespError, Result};
use crate::instance::CovarianceInstance;
use crate::linalg::{self, Cholesky, SymMatrix};
use crate::report::{BoundReport, Flag, MixParams};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const GAMMA_GRID_SIZE: usize = 100;

/// Diagonal shift `d`, exponents `p` and scaling `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlpParams {
    pub d: Vec<f64>,
    pub p: Vec<f64>,
    pub gamma: f64,
}

impl NlpParams {
    /// `[1 / max d, 1 / min d]`.
    pub fn gamma_interval(&self) -> (f64, f64) {
        let dmax = self.d.iter().cloned().fold(f64::MIN, f64::max);
        let dmin = self.d.iter().cloned().fold(f64::MAX, f64::min);
        (1.0 / dmax, 1.0 / dmin)
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        NlpParams { gamma, ..self.clone() }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.d.len() != n {
            return Err(MespError::DimensionMismatch { expected: n, found: self.d.len() });
        }
        if self.p.len() != n {
            return Err(MespError::DimensionMismatch { expected: n, found: self.p.len() });
        }
        if !(self.gamma > 0.0) || self.d.iter().any(|&v| !(v > 0.0)) {
            return Err(MespError::InvalidParam("gamma and d must be positive".into()));
        }
        Ok(())
    }
}

/// Trace-minimal diagonal `d` with `diag(d) ⪰ C`, exponents `p = e`, and
/// `gamma = 1 / max d`, the end of the interval where every `log(gamma d_i)`
/// is nonpositive and concavity is most robust.
///
/// Solved by Newton's method on `e'd - mu ldet(diag(d) - C)` along a
/// decreasing `mu` path.
pub fn nlp_trace_params(inst: &CovarianceInstance) -> Result<NlpParams> {
    let d = trace_diagonal(inst.cov())?;
    let n = d.len();
    let mut params = NlpParams { d, p: vec![1.0; n], gamma: 1.0 };
    params.gamma = params.gamma_interval().0;
    Ok(params)
}

fn trace_diagonal(c: &SymMatrix) -> Result<Vec<f64>> {
    let n = c.n();
    let scale = c.max_abs().max(f64::MIN_POSITIVE);
    // Gershgorin start: strictly diagonally dominant
    let mut d: Vec<f64> = (0..n)
        .map(|i| c[(i, i)] + (0..n).filter(|&j| j != i).map(|j| c[(i, j)].abs()).sum::<f64>() + scale)
        .collect();
    let slack = |d: &[f64]| {
        let mut m = c.scale(-1.0);
        m.add_diag(d);
        m
    };
    let mut mu = scale;
    let mu_stop = 1e-9 * scale;
    let mut iterations = 0;
    loop {
        for _ in 0..200 {
            let w = linalg::inverse(&slack(&d))?;
            let g: Vec<f64> = (0..n).map(|i| 1.0 - mu * w[(i, i)]).collect();
            let h = SymMatrix::from_fn(n, |i, j| mu * w[(i, j)] * w[(i, j)]);
            let step = Cholesky::factor(&h)?.solve_vec(&g);
            let dec = linalg::dot(&g, &step);
            iterations += 1;
            if dec <= 1e-12 * mu.max(1e-300) || dec <= 1e-24 {
                break;
            }
            let phi = |d: &[f64]| -> Option<f64> {
                Cholesky::factor(&slack(d)).ok().map(|ch| d.iter().sum::<f64>() - mu * ch.ldet())
            };
            let phi0 = phi(&d).ok_or(MespError::NonfiniteStep)?;
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = d.iter().zip(&step).map(|(a, b)| a - t * b).collect();
                if let Some(v) = phi(&trial) {
                    if v <= phi0 - 1e-4 * t * dec {
                        d = trial;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if mu <= mu_stop {
            break;
        }
        if iterations > 5000 {
            return Err(MespError::MaxIterations { iterations });
        }
        mu *= 0.1;
    }
    Ok(d)
}

/// One NLP term over matrix `c` for cardinality `s`, evaluated at `x` (or at
/// `e - x` when `flipped`), multiplied by `weight`, plus `shift`.
#[derive(Clone, Debug)]
struct NlpTerm {
    e: SymMatrix,
    s: usize,
    params: NlpParams,
    weight: f64,
    flipped: bool,
    shift: f64,
}

impl NlpTerm {
    fn new(c: &SymMatrix, s: usize, params: &NlpParams, weight: f64, flipped: bool, shift: f64) -> Self {
        let mut e = c.clone();
        let neg: Vec<f64> = params.d.iter().map(|v| -v).collect();
        e.add_diag(&neg);
        NlpTerm { e, s, params: params.clone(), weight, flipped, shift }
    }

    fn matrix(&self, x: &[f64]) -> SymMatrix {
        let n = x.len();
        let g = self.params.gamma;
        let sv: Vec<f64> = (0..n).map(|i| x[i].powf(self.params.p[i] / 2.0)).collect();
        let mut m = SymMatrix::from_fn(n, |i, j| g * sv[i] * self.e[(i, j)] * sv[j]);
        let t: Vec<f64> = (0..n).map(|i| (x[i] * (g * self.params.d[i]).ln()).exp()).collect();
        m.add_diag(&t);
        m
    }

    fn value_at(&self, x: &[f64]) -> Result<f64> {
        Ok(linalg::ldet(&self.matrix(x))? - self.s as f64 * self.params.gamma.ln())
    }

    /// Value, gradient and Hessian in the term's own variable.
    fn eval_raw(&self, x: &[f64], hessian: bool) -> Result<Eval> {
        let n = x.len();
        let gam = self.params.gamma;
        let m = self.matrix(x);
        let ch = Cholesky::factor(&m)?;
        let value = ch.ldet() - self.s as f64 * gam.ln();
        let g = ch.inverse();
        let half: Vec<f64> = self.params.p.iter().map(|p| p / 2.0).collect();
        let sv: Vec<f64> = (0..n).map(|i| x[i].powf(half[i])).collect();
        let s1: Vec<f64> = (0..n).map(|i| half[i] * x[i].powf(half[i] - 1.0)).collect();
        let ell: Vec<f64> = (0..n).map(|i| (gam * self.params.d[i]).ln()).collect();
        let t: Vec<f64> = (0..n).map(|i| (x[i] * ell[i]).exp()).collect();
        let tau: Vec<f64> = (0..n).map(|i| t[i] * ell[i]).collect();
        // (G w_i)_i with w_i = E S e_i-row: (G E S)_{ii}
        let es = linalg::Matrix::from_fn(n, n, |i, j| self.e[(i, j)] * sv[j]);
        let ges = g.to_matrix().matmul(&es.transpose())?;
        // ges[(k, i)] = sum_j G_kj E_ij s_j = (G w_i)_k
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                let a = if s1[i].is_finite() && sv[i] != 0.0 || half[i] >= 1.0 {
                    2.0 * gam * s1[i] * ges[(i, i)]
                } else {
                    0.0
                };
                a + tau[i] * g[(i, i)]
            })
            .collect();
        let hess = if hessian {
            let s2: Vec<f64> = (0..n).map(|i| half[i] * (half[i] - 1.0) * x[i].powf(half[i] - 2.0)).collect();
            // U columns u_i = gamma s_i' w_i; Q = G U; P = U' G U
            let u = linalg::Matrix::from_fn(n, n, |k, i| gam * s1[i] * self.e[(i, k)] * sv[k]);
            let q = g.to_matrix().matmul(&u)?;
            let ut = u.transpose();
            let p = ut.matmul(&q)?;
            let h = SymMatrix::from_fn(n, |i, j| {
                let gij = g[(i, j)];
                let mut second = if i == j {
                    2.0 * gam * s2[i] * ges[(i, i)]
                        + 2.0 * gam * s1[i] * s1[i] * self.e[(i, i)] * g[(i, i)]
                        + t[i] * ell[i] * ell[i] * g[(i, i)]
                } else {
                    2.0 * gam * s1[i] * s1[j] * self.e[(i, j)] * gij
                };
                second -= 2.0 * q[(i, j)] * q[(j, i)]
                    + 2.0 * gij * p[(i, j)]
                    + 2.0 * tau[j] * q[(j, i)] * gij
                    + 2.0 * tau[i] * q[(i, j)] * gij
                    + tau[i] * tau[j] * gij * gij;
                second
            });
            Some(h)
        } else {
            None
        };
        Ok(Eval { value, grad, hess })
    }

    /// Weighted contribution in the outer variable `x`.
    fn eval(&self, x: &[f64], hessian: bool) -> Result<Eval> {
        let local: Vec<f64> = if self.flipped { x.iter().map(|v| 1.0 - v).collect() } else { x.to_vec() };
        let ev = self.eval_raw(&local, hessian)?;
        let sign = if self.flipped { -1.0 } else { 1.0 };
        Ok(Eval {
            value: self.weight * (ev.value + self.shift),
            grad: ev.grad.iter().map(|g| self.weight * sign * g).collect(),
            hess: ev.hess.map(|h| h.scale(self.weight)),
        })
    }
}

/// Weighted sum of NLP terms, as a slice objective.
#[derive(Clone, Debug)]
pub struct NlpObjective {
    n: usize,
    terms: Vec<NlpTerm>,
}

impl NlpObjective {
    /// `f_nlp(C, s; x)`.
    pub fn direct(inst: &CovarianceInstance, s: usize, params: &NlpParams) -> Result<Self> {
        params.check(inst.n())?;
        Ok(NlpObjective { n: inst.n(), terms: vec![NlpTerm::new(inst.cov(), s, params, 1.0, false, 0.0)] })
    }

    /// `(1 - alpha) f_nlp(C, s; x) + alpha (f_nlp(C^{-1}, n - s; e - x) + ldet C)`.
    pub fn mixed(
        inst: &CovarianceInstance,
        s: usize,
        alpha: f64,
        params1: &NlpParams,
        params2: &NlpParams,
    ) -> Result<Self> {
        MixParams::new(alpha, 0.0, 0.0)?;
        let n = inst.n();
        params1.check(n)?;
        params2.check(n)?;
        let mut terms = Vec::new();
        if alpha < 1.0 {
            terms.push(NlpTerm::new(inst.cov(), s, params1, 1.0 - alpha, false, 0.0));
        }
        if alpha > 0.0 {
            terms.push(NlpTerm::new(inst.cov_inv(), n - s, params2, alpha, true, inst.ldet_c()));
        }
        Ok(NlpObjective { n, terms })
    }

    /// Multiplies every term by `weight >= 0`.
    pub fn scaled(mut self, weight: f64) -> Self {
        for t in &mut self.terms {
            t.weight *= weight;
        }
        self
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for t in &self.terms {
            let local: Vec<f64> = if t.flipped { x.iter().map(|v| 1.0 - v).collect() } else { x.to_vec() };
            v += t.weight * (t.value_at(&local)? + t.shift);
        }
        Ok(v)
    }
}

impl SliceObjective for NlpObjective {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64], hessian: bool) -> Result<Eval> {
        let mut out = Eval {
            value: 0.0,
            grad: vec![0.0; self.n],
            hess: hessian.then(|| SymMatrix::zeros(self.n)),
        };
        for t in &self.terms {
            let ev = t.eval(x, hessian)?;
            out.value += ev.value;
            linalg::axpy(1.0, &ev.grad, &mut out.grad);
            if let (Some(h), Some(th)) = (out.hess.as_mut(), ev.hess.as_ref()) {
                h.axpy(1.0, th);
            }
        }
        Ok(out)
    }
}

fn check_x(x: &[f64], n: usize, s: usize) -> Result<()> {
    if x.len() != n {
        return Err(MespError::DimensionMismatch { expected: n, found: x.len() });
    }
    let sum: f64 = x.iter().sum();
    if x.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) || (sum - s as f64).abs() > 1e-7 {
        return Err(MespError::Infeasible(format!("x must satisfy 0 <= x <= e and e'x = {s}")));
    }
    Ok(())
}

/// `ldet(gamma X^{p/2}(C - D)X^{p/2} + (gamma D)^x) - s log gamma`.
pub fn nlp_objective(inst: &CovarianceInstance, s: usize, params: &NlpParams, x: &[f64]) -> Result<f64> {
    check_x(x, inst.n(), s)?;
    let xc: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    NlpObjective::direct(inst, s, params)?.value(&xc)
}

/// Gradient of [`nlp_objective`] at an interior point.
pub fn nlp_gradient(inst: &CovarianceInstance, s: usize, params: &NlpParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(NlpObjective::direct(inst, s, params)?.eval(x, false)?.grad)
}

/// Options for NLP solves.
#[derive(Clone, Debug)]
pub struct NlpSolve<'a> {
    pub tilt: Option<&'a [f64]>,
    pub start: Option<&'a [f64]>,
    pub tol: f64,
}

impl Default for NlpSolve<'_> {
    fn default() -> Self {
        NlpSolve { tilt: None, start: None, tol: DEFAULT_TOL }
    }
}

/// Maximizes `obj - tilt'x` over `{0 <= x <= e, e'x = s}`.
pub fn solve_objective(obj: &NlpObjective, s: usize, opts: &NlpSolve) -> Result<BoundReport> {
    let started = Instant::now();
    let n = obj.dim();
    let zero = vec![0.0; n];
    let tilt = opts.tilt.unwrap_or(&zero);
    if s == 0 || s == n {
        let x = vec![if s == n { 1.0 } else { 0.0 }; n];
        let value = obj.value(&x)? - linalg::dot(tilt, &x);
        let mut report = BoundReport::new(value, x);
        report.dual_value = Some(value);
        report.wall_time = started.elapsed();
        return Ok(report);
    }
    let bopts = BarrierOptions { tol: opts.tol, mu_min: 1e-12, ..BarrierOptions::default() };
    let sol = barrier::maximize_on_slice(obj, s, tilt, opts.start, &bopts)?;
    // the certificate is only valid for a concave objective; the barrier
    // iterations checked the regularized Hessian, check the plain one here
    let h = obj.eval(&sol.x, true)?.hess.expect("hessian requested");
    let mut neg = h.scale(-1.0);
    let reg = 1e-9 * (1.0 + neg.max_abs());
    neg.add_diag(&vec![reg; n]);
    if Cholesky::factor(&neg).is_err() {
        return Err(MespError::ConcavityViolation);
    }
    // curvature at one point does not rule out a better maximum elsewhere;
    // any subset vector is feasible, so one beating the solve exposes it
    let best_vertex = vertex_search(obj, s, tilt, &sol.x)?;
    if best_vertex > sol.dual + 1e-7 * (1.0 + sol.dual.abs()) {
        return Err(MespError::ConcavityViolation);
    }
    let mut report = BoundReport::new(sol.primal, sol.x);
    report.dual_value = Some(sol.dual);
    report.kkt_residual = sol.dual - sol.primal;
    report.iterations = sol.iterations;
    if !sol.converged {
        report.flag(Flag::MaxIterations);
    }
    report.wall_time = started.elapsed();
    Ok(report)
}

/// Best `obj - tilt'x` over subset vectors reachable by single swaps from
/// the `s` largest entries of `x`.
fn vertex_search(obj: &NlpObjective, s: usize, tilt: &[f64], x: &[f64]) -> Result<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut v = vec![0.0; n];
    for &i in &order[..s] {
        v[i] = 1.0;
    }
    let score = |v: &[f64]| -> Result<f64> { Ok(obj.value(v)? - linalg::dot(tilt, v)) };
    let mut best = score(&v)?;
    for _ in 0..n {
        let mut improved = false;
        for i in 0..n {
            if v[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if v[j] == 1.0 {
                    continue;
                }
                v.swap(i, j);
                let t = score(&v)?;
                if t > best {
                    best = t;
                    improved = true;
                    break;
                }
                v.swap(i, j);
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

/// NLP bound at fixed parameters; the report carries the primal value and
/// the dual certificate.
pub fn solve_nlp(inst: &CovarianceInstance, s: usize, params: &NlpParams, tol: f64) -> Result<BoundReport> {
    let obj = NlpObjective::direct(inst, s, params)?;
    let mut report = solve_objective(&obj, s, &NlpSolve { tol, ..NlpSolve::default() })?;
    report.params = MixParams { alpha: 0.0, psi1: params.gamma.ln(), psi2: 0.0 };
    Ok(report)
}

/// Complementary NLP bound: `ldet C + NLP(C^{-1}, n - s)`, optimizer mapped
/// back to selection space.
pub fn solve_cnlp(inst: &CovarianceInstance, s: usize, params: &NlpParams, tol: f64) -> Result<BoundReport> {
    let (comp, shift) = inst.complement();
    let mut report = solve_nlp(&comp, inst.n() - s, params, tol)?;
    report.value += shift;
    report.dual_value = report.dual_value.map(|v| v + shift);
    report.optimizer_x = report.optimizer_x.iter().map(|v| 1.0 - v).collect();
    report.params = MixParams { alpha: 1.0, psi1: 0.0, psi2: params.gamma.ln() };
    Ok(report)
}

/// Log-uniform grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || (hi / lo - 1.0).abs() < 1e-12 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

/// Evaluates the NLP bound over a log-uniform `gamma` grid on
/// `[1/max d, 1/min d]` and returns the best `(gamma, report)`. Grid points
/// where the solve fails are skipped and flagged on the result.
pub fn gamma_grid_report(
    inst: &CovarianceInstance,
    s: usize,
    params: &NlpParams,
    count: usize,
    tol: f64,
) -> Result<(f64, BoundReport)> {
    let (lo, hi) = params.gamma_interval();
    let grid = log_grid(lo, hi, count);
    let results: Vec<(f64, Result<BoundReport>)> = grid
        .par_iter()
        .map(|&g| (g, solve_nlp(inst, s, &params.with_gamma(g), tol)))
        .collect();
    pick_best(results)
}

fn pick_best(results: Vec<(f64, Result<BoundReport>)>) -> Result<(f64, BoundReport)> {
    let mut best: Option<(f64, BoundReport)> = None;
    let mut skipped = false;
    let mut last_err = None;
    for (g, r) in results {
        match r {
            Ok(rep) => {
                if best.as_ref().map_or(true, |(_, b)| rep.upper_bound() < b.upper_bound()) {
                    best = Some((g, rep));
                }
            }
            Err(e) => {
                log::debug!("grid point {g} skipped: {e}");
                skipped = true;
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((g, mut rep)) => {
            if skipped {
                rep.flag(Flag::SkippedParameter);
            }
            Ok((g, rep))
        }
        None => Err(last_err.unwrap_or_else(|| MespError::BoundFailure("empty parameter grid".into()))),
    }
}

/// `(best_gamma, best_value)` over the default-size grid.
pub fn gamma_grid(inst: &CovarianceInstance, s: usize, params: &NlpParams, count: usize) -> Result<(f64, f64)> {
    let (g, rep) = gamma_grid_report(inst, s, params, count, DEFAULT_TOL)?;
    Ok((g, rep.upper_bound()))
}

/// Mixed NLP bound at fixed `alpha`.
pub fn solve_mnlp(
    inst: &CovarianceInstance,
    s: usize,
    alpha: f64,
    params1: &NlpParams,
    params2: &NlpParams,
    tol: f64,
) -> Result<BoundReport> {
    solve_mnlp_with(inst, s, alpha, params1, params2, &NlpSolve { tol, ..NlpSolve::default() })
}

pub fn solve_mnlp_with(
    inst: &CovarianceInstance,
    s: usize,
    alpha: f64,
    params1: &NlpParams,
    params2: &NlpParams,
    opts: &NlpSolve,
) -> Result<BoundReport> {
    let obj = NlpObjective::mixed(inst, s, alpha, params1, params2)?;
    let mut report = solve_objective(&obj, s, opts)?;
    report.params = MixParams { alpha, psi1: params1.gamma.ln(), psi2: params2.gamma.ln() };
    Ok(report)
}

/// `alpha = 0.1 i`, `i = 0..=10`.
pub fn alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Best mixed NLP bound over the 11-point alpha grid (ties go to the
/// smallest alpha).
pub fn alpha_grid_mnlp(
    inst: &CovarianceInstance,
    s: usize,
    params1: &NlpParams,
    params2: &NlpParams,
) -> Result<(f64, f64)> {
    let (a, rep) = alpha_grid_report(inst, s, params1, params2, DEFAULT_TOL)?;
    Ok((a, rep.upper_bound()))
}

pub fn alpha_grid_report(
    inst: &CovarianceInstance,
    s: usize,
    params1: &NlpParams,
    params2: &NlpParams,
    tol: f64,
) -> Result<(f64, BoundReport)> {
    let results: Vec<(f64, Result<BoundReport>)> = alpha_grid()
        .par_iter()
        .map(|&a| (a, solve_mnlp(inst, s, a, params1, params2, tol)))
        .collect();
    pick_best(results)
}

/// Trace parameters for `C` and `C^{-1}` with their best grid `gamma`.
pub fn tuned_pair(inst: &CovarianceInstance, s: usize, tol: f64) -> Result<(NlpParams, NlpParams)> {
    let n = inst.n();
    let p1 = nlp_trace_params(inst)?;
    let (comp, _) = inst.complement();
    let p2 = nlp_trace_params(&comp)?;
    let g1 = if s == 0 { p1.gamma } else { gamma_grid_report(inst, s, &p1, GAMMA_GRID_SIZE, tol)?.0 };
    let g2 = if s == n { p2.gamma } else { gamma_grid_report(&comp, n - s, &p2, GAMMA_GRID_SIZE, tol)?.0 };
    Ok((p1.with_gamma(g1), p2.with_gamma(g2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{brute_force_opt, gen_random_pd};
    use approx::assert_relative_eq;

    fn inst(rows: &[Vec<f64>]) -> CovarianceInstance {
        CovarianceInstance::from_rows(rows).unwrap()
    }

    #[test]
    fn trace_params_examples() {
        let id = CovarianceInstance::new(SymMatrix::identity(3), "").unwrap();
        let p = nlp_trace_params(&id).unwrap();
        for v in &p.d {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-7);
        }
        assert_relative_eq!(p.gamma, 1.0, epsilon = 1e-6);
        let dg = inst(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 4.0]]);
        let p = nlp_trace_params(&dg).unwrap();
        for (a, b) in p.d.iter().zip([1.0, 2.0, 4.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-6);
        }
        let (lo, hi) = p.gamma_interval();
        assert_relative_eq!(lo, 0.25, epsilon = 1e-6);
        assert_relative_eq!(hi, 1.0, epsilon = 1e-6);
        let two = inst(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let p = nlp_trace_params(&two).unwrap();
        assert_relative_eq!(p.d[0], 3.0, epsilon = 1e-6);
        assert_relative_eq!(p.d[1], 3.0, epsilon = 1e-6);
        // grid search confirmation: (d1 - 2)(d2 - 2) >= 1 minimizes d1 + d2 at (3, 3)
        let best = (1..4000)
            .map(|k| {
                let d1 = 2.0 + k as f64 * 1e-3;
                d1 + 2.0 + 1.0 / (d1 - 2.0)
            })
            .fold(f64::MAX, f64::min);
        assert!((best - 6.0).abs() < 1e-6);
    }

    #[test]
    fn trace_params_slack_is_tight() {
        let inst = gen_random_pd(8, 3, 20.0).unwrap();
        let p = nlp_trace_params(&inst).unwrap();
        let mut m = inst.cov().scale(-1.0);
        m.add_diag(&p.d);
        let lam = linalg::min_eigenvalue(&m);
        assert!(lam >= 0.0 && lam <= 1e-6 * inst.cov().max_abs(), "{lam}");
    }

    #[test]
    fn objective_examples() {
        let id = CovarianceInstance::new(SymMatrix::identity(4), "").unwrap();
        let p = nlp_trace_params(&id).unwrap().with_gamma(1.0);
        assert!(nlp_objective(&id, 2, &p, &[0.5, 0.5, 0.7, 0.3]).unwrap().abs() < 1e-10);
        let dg = inst(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 4.0]]);
        let p = NlpParams { d: vec![1.0, 2.0, 4.0], p: vec![1.0; 3], gamma: 0.5 };
        let x = [0.2, 0.9, 0.9];
        let expected: f64 = x.iter().zip([1.0f64, 2.0, 4.0]).map(|(xi, d)| xi * (0.5 * d).ln()).sum::<f64>()
            - 2.0 * 0.5f64.ln();
        assert_relative_eq!(nlp_objective(&dg, 2, &p, &x).unwrap(), expected, epsilon = 1e-12);
        let r = gen_random_pd(6, 9, 30.0).unwrap();
        let p = nlp_trace_params(&r).unwrap();
        let x = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let ent = r.entropy(&[0, 2, 3]).unwrap();
        assert_relative_eq!(nlp_objective(&r, 3, &p.with_gamma(1.0), &x).unwrap(), ent, epsilon = 1e-8);
        assert!(nlp_objective(&r, 2, &p, &x).is_err());
    }

    fn fd_check(obj: &NlpObjective, x: &[f64]) {
        let ev = obj.eval(x, true).unwrap();
        let h = ev.hess.unwrap();
        let n = x.len();
        let step = 1e-6;
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            let ep = obj.eval(&xp, false).unwrap();
            let em = obj.eval(&xm, false).unwrap();
            let fd = (ep.value - em.value) / (2.0 * step);
            assert!((fd - ev.grad[i]).abs() <= 1e-5 * fd.abs().max(1.0), "grad {i}: {fd} vs {}", ev.grad[i]);
            for j in 0..n {
                let fdh = (ep.grad[j] - em.grad[j]) / (2.0 * step);
                assert!((fdh - h[(i, j)]).abs() <= 1e-4 * fdh.abs().max(1.0), "hess {i},{j}: {fdh} vs {}", h[(i, j)]);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let r = gen_random_pd(5, 17, 15.0).unwrap();
        let p1 = nlp_trace_params(&r).unwrap();
        let x = [0.3, 0.55, 0.4, 0.25, 0.5];
        fd_check(&NlpObjective::direct(&r, 2, &p1).unwrap(), &x);
        let mut odd = p1.clone();
        odd.p = vec![0.7, 1.3, 1.0, 0.9, 2.0];
        fd_check(&NlpObjective::direct(&r, 2, &odd).unwrap(), &x);
        let (comp, _) = r.complement();
        let p2 = nlp_trace_params(&comp).unwrap();
        fd_check(&NlpObjective::mixed(&r, 2, 0.35, &p1, &p2).unwrap(), &x);
    }

    #[test]
    fn identity_bound_is_zero() {
        let id = CovarianceInstance::new(SymMatrix::identity(5), "").unwrap();
        let p = nlp_trace_params(&id).unwrap();
        let rep = solve_nlp(&id, 2, &p, 1e-8).unwrap();
        assert!(rep.value.abs() < 1e-7);
        assert!(rep.upper_bound() - rep.value <= 1e-8);
    }

    #[test]
    fn grid_bound_dominates_oracle() {
        let r = gen_random_pd(10, 5, 40.0).unwrap();
        let (z, _) = brute_force_opt(&r, 4).unwrap();
        let p = nlp_trace_params(&r).unwrap();
        let (g, v) = gamma_grid(&r, 4, &p, 20).unwrap();
        assert!(v >= z - 1e-6, "{v} < {z}");
        let (lo, hi) = p.gamma_interval();
        assert!(g >= lo * (1.0 - 1e-12) && g <= hi * (1.0 + 1e-12));
        // an endpoint may be rejected for nonconcavity; compare with those that solve
        for end in [lo, hi] {
            if let Ok(rep) = solve_nlp(&r, 4, &p.with_gamma(end), DEFAULT_TOL) {
                assert!(v <= rep.upper_bound() + 1e-9);
            }
        }
        assert!(solve_nlp(&r, 4, &p.with_gamma(lo), DEFAULT_TOL).is_ok());
    }

    #[test]
    fn local_maximum_below_a_subset_is_rejected() {
        let (comp, _) = gen_random_pd(11, 1041, 1000.0).unwrap().complement();
        let p = nlp_trace_params(&comp).unwrap();
        let z = brute_force_opt(&comp, 3).unwrap().0;
        let hi = p.gamma_interval().1;
        match solve_nlp(&comp, 3, &p.with_gamma(hi), DEFAULT_TOL) {
            Ok(rep) => assert!(rep.upper_bound() >= z - 1e-6),
            Err(e) => assert!(matches!(e, MespError::ConcavityViolation), "{e}"),
        }
    }

    #[test]
    fn two_starts_agree() {
        let r = gen_random_pd(8, 12, 25.0).unwrap();
        let p = nlp_trace_params(&r).unwrap();
        let obj = NlpObjective::direct(&r, 3, &p).unwrap();
        let a = solve_objective(&obj, 3, &NlpSolve::default()).unwrap();
        let start = [0.1, 0.6, 0.2, 0.5, 0.3, 0.4, 0.5, 0.4];
        let b = solve_objective(&obj, 3, &NlpSolve { start: Some(&start), ..NlpSolve::default() }).unwrap();
        assert!((a.value - b.value).abs() < 1e-6);
    }

    #[test]
    fn mixed_endpoints() {
        let r = gen_random_pd(8, 2, 30.0).unwrap();
        let (p1, p2) = tuned_pair(&r, 3, DEFAULT_TOL).unwrap();
        let m0 = solve_mnlp(&r, 3, 0.0, &p1, &p2, DEFAULT_TOL).unwrap();
        let m1 = solve_mnlp(&r, 3, 1.0, &p1, &p2, DEFAULT_TOL).unwrap();
        assert!((m0.value - solve_nlp(&r, 3, &p1, DEFAULT_TOL).unwrap().value).abs() < 1e-6);
        assert!((m1.value - solve_cnlp(&r, 3, &p2, DEFAULT_TOL).unwrap().value).abs() < 1e-6);
        let (a, best) = alpha_grid_mnlp(&r, 3, &p1, &p2).unwrap();
        assert!((0.0..=1.0).contains(&a));
        assert!(best <= m0.upper_bound().min(m1.upper_bound()) + 1e-6);
        let (z, _) = brute_force_opt(&r, 3).unwrap();
        assert!(best >= z - 1e-6);
    }

    #[test]
    fn alpha_grid_identity_picks_first() {
        let id = CovarianceInstance::new(SymMatrix::identity(4), "").unwrap();
        let p = nlp_trace_params(&id).unwrap();
        let (a, v) = alpha_grid_mnlp(&id, 2, &p, &p).unwrap();
        assert_eq!(a, 0.0);
        assert!(v.abs() < 1e-7);
    }
}
