//! Long-step logarithmic-barrier path following for concave maximization
//! over the box-capped hyperplane slice `{x : e'x = s, 0 <= x <= e}`.
//!
//! For each barrier parameter `mu` the barrier problem
//! `max f(x) - t'x + mu * sum(log x_i + log(1 - x_i))` is solved with
//! equality-constrained Newton steps (the constraint `e'x = s` is carried by
//! a scalar multiplier), a fraction-to-boundary rule and Armijo backtracking.
//! Each outer iteration produces a certificate: for concave `f`,
//! `f(x) + max_{slice} g'(y - x)` over-estimates the maximum, and the linear
//! maximum is the sum of the `s` largest gradient entries.

use crate::error::{MespError, Result};
use crate::linalg::{self, Cholesky, SymMatrix};

/// Value, gradient and (optionally) Hessian of a concave objective.
pub struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Option<SymMatrix>,
}

pub trait SliceObjective {
    fn dim(&self) -> usize;
    /// Fails (typically with `NotPositiveDefinite`) outside the domain.
    fn eval(&self, x: &[f64], hessian: bool) -> Result<Eval>;
    /// Objectives that are concave by construction get their Newton matrix
    /// regularized when roundoff makes it indefinite; all others report
    /// `ConcavityViolation`.
    fn known_concave(&self) -> bool {
        false
    }
}

pub(crate) fn factor_newton(k: &SymMatrix, known_concave: bool) -> Result<Cholesky> {
    match Cholesky::factor(k) {
        Ok(ch) => Ok(ch),
        Err(_) if known_concave => {
            let n = k.n();
            let mut shift = 1e-12 * (1.0 + k.max_abs());
            for _ in 0..30 {
                let mut reg = k.clone();
                reg.add_diag(&vec![shift; n]);
                if let Ok(ch) = Cholesky::factor(&reg) {
                    return Ok(ch);
                }
                shift *= 10.0;
            }
            Err(MespError::ConcavityViolation)
        }
        Err(_) => Err(MespError::ConcavityViolation),
    }
}

#[derive(Clone, Debug)]
pub struct BarrierOptions {
    pub mu0: f64,
    pub mu_factor: f64,
    pub mu_min: f64,
    pub tol: f64,
    pub max_newton: usize,
    pub fraction_to_boundary: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            mu0: 1.0,
            mu_factor: 0.1,
            mu_min: 1e-9,
            tol: 1e-7,
            max_newton: 400,
            fraction_to_boundary: 0.99,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SliceSolution {
    pub x: Vec<f64>,
    /// `f(x) - t'x` at the returned point.
    pub primal: f64,
    /// Linearization certificate, `>= primal`.
    pub dual: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sum of the `s` largest entries.
pub fn top_sum(v: &[f64], s: usize) -> f64 {
    let mut w = v.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    w.iter().take(s).sum()
}

fn barrier_terms(x: &[f64], mu: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let mut val = 0.0;
    let mut g = Vec::with_capacity(x.len());
    let mut h = Vec::with_capacity(x.len());
    for &xi in x {
        let yi = 1.0 - xi;
        val += xi.ln() + yi.ln();
        g.push(mu * (1.0 / xi - 1.0 / yi));
        h.push(mu * (1.0 / (xi * xi) + 1.0 / (yi * yi)));
    }
    (mu * val, g, h)
}

fn in_box(x: &[f64]) -> bool {
    x.iter().all(|&v| v > 0.0 && v < 1.0)
}

/// Maximizes `f(x) - tilt'x` over the slice with `e'x = s`.
pub fn maximize_on_slice(
    obj: &dyn SliceObjective,
    s: usize,
    tilt: &[f64],
    start: Option<&[f64]>,
    opts: &BarrierOptions,
) -> Result<SliceSolution> {
    let n = obj.dim();
    if s == 0 || s >= n {
        return Err(MespError::InvalidParam(format!("slice needs 0 < s < n, got s = {s}, n = {n}")));
    }
    let mut x: Vec<f64> = match start {
        Some(x0) => {
            let sum: f64 = x0.iter().sum();
            if x0.len() != n || !in_box(x0) || (sum - s as f64).abs() > 1e-9 {
                return Err(MespError::Infeasible("start point must be interior to the slice".into()));
            }
            x0.to_vec()
        }
        None => vec![s as f64 / n as f64; n],
    };
    let lin = |x: &[f64]| linalg::dot(tilt, x);

    let mut mu = opts.mu0;
    let mut iterations = 0;
    loop {
        // Newton on the barrier problem for this mu
        let mut inner = 0;
        loop {
            let ev = obj.eval(&x, true)?;
            let (bval, bgrad, bhess) = barrier_terms(&x, mu);
            let phi = ev.value - lin(&x) + bval;
            let grad: Vec<f64> = (0..n).map(|i| ev.grad[i] - tilt[i] + bgrad[i]).collect();
            let mut k = ev.hess.expect("hessian requested").scale(-1.0);
            k.add_diag(&bhess);
            let ch = factor_newton(&k, obj.known_concave())?;
            let kg = ch.solve_vec(&grad);
            let ke = ch.solve_vec(&vec![1.0; n]);
            let lambda = kg.iter().sum::<f64>() / ke.iter().sum::<f64>();
            let d: Vec<f64> = (0..n).map(|i| kg[i] - lambda * ke[i]).collect();
            let decrement = linalg::dot(&grad, &d);
            if !decrement.is_finite() {
                return Err(MespError::NonfiniteStep);
            }
            if decrement <= (1e-3 * mu).max(1e-15 * phi.abs().max(1.0)) || inner >= opts.max_newton {
                break;
            }
            let mut tmax: f64 = 1.0;
            for i in 0..n {
                if d[i] < 0.0 {
                    tmax = tmax.min(-x[i] / d[i]);
                } else if d[i] > 0.0 {
                    tmax = tmax.min((1.0 - x[i]) / d[i]);
                }
            }
            let mut t = if tmax < 1.0 { opts.fraction_to_boundary * tmax } else { 1.0 };
            let mut accepted = false;
            for _ in 0..60 {
                let xt: Vec<f64> = (0..n).map(|i| x[i] + t * d[i]).collect();
                if in_box(&xt) {
                    if let Ok(evt) = obj.eval(&xt, false) {
                        let phit = evt.value - lin(&xt) + barrier_terms(&xt, mu).0;
                        if phit >= phi + 1e-4 * t * decrement {
                            x = xt;
                            accepted = true;
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            iterations += 1;
            inner += 1;
            if !accepted {
                break;
            }
            // keep the iterate on the hyperplane exactly
            let drift = (x.iter().sum::<f64>() - s as f64) / n as f64;
            if drift.abs() > 0.0 {
                let shifted: Vec<f64> = x.iter().map(|v| v - drift).collect();
                if in_box(&shifted) {
                    x = shifted;
                }
            }
        }
        let ev = obj.eval(&x, false)?;
        let g: Vec<f64> = (0..n).map(|i| ev.grad[i] - tilt[i]).collect();
        let primal = ev.value - lin(&x);
        let dual = primal + top_sum(&g, s) - linalg::dot(&g, &x);
        let gap = dual - primal;
        if gap <= opts.tol || mu <= opts.mu_min {
            return Ok(SliceSolution {
                x,
                primal,
                dual,
                grad: ev.grad,
                iterations,
                converged: gap <= opts.tol,
            });
        }
        mu *= opts.mu_factor;
    }
}
