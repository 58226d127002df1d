//! Scaled BQP bound, its complement, and the strengthened mixed bound over
//! the lifted set
//!
//! `P(n, s) = {(x, X) : X - xx' ⪰ 0, Diag(X) = x, e'x = s, Xe = s x}`.
//!
//! The solver is an equality-constrained Newton barrier method. The linear
//! constraints are eliminated once per `(n, s)` by an orthonormal null-space
//! basis of the constraint map on symmetric matrices, so every iterate is
//! `X = X0 + Σ z_k D_k`. On `P(n, s)` the matrix `X - xx'` always has `e` in
//! its kernel, so the barrier is `-mu ldet [[1, x'], [x, X + ee']]`, which is
//! `ldet(X - xx')` restricted to `e⊥` plus a constant.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::barrier;
use crate::error::{MespError, Result};
use crate::instance::CovarianceInstance;
use crate::linalg::{self, Cholesky, Matrix, SymMatrix};
use crate::report::{BoundReport, Flag, MixParams};

pub const DEFAULT_TOL: f64 = 1e-7;

/// A point `(x, X)` of (a relaxation of) `P(n, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub x: Vec<f64>,
    pub lift: SymMatrix,
}

/// Constraint residuals of a lifted point against `P(n, s)`.
#[derive(Clone, Copy, Debug)]
pub struct Residuals {
    pub diag: f64,
    pub sum: f64,
    pub row_sum: f64,
    /// Smallest eigenvalue of `[[1, x'], [x, X]]`.
    pub min_eig: f64,
}

impl Residuals {
    pub fn feasible(&self) -> bool {
        self.diag <= 1e-8 && self.sum <= 1e-8 && self.row_sum <= 1e-7 && self.min_eig >= -1e-8
    }
}

impl LiftedPoint {
    pub fn new(x: Vec<f64>, lift: SymMatrix) -> Result<Self> {
        if x.len() != lift.n() {
            return Err(MespError::DimensionMismatch { expected: lift.n(), found: x.len() });
        }
        Ok(LiftedPoint { x, lift })
    }

    /// `(x, xx')` for a 0/1 vector.
    pub fn from_binary(x: &[f64]) -> Self {
        let lift = SymMatrix::from_fn(x.len(), |i, j| x[i] * x[j]);
        LiftedPoint { x: x.to_vec(), lift }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// The bordered matrix `[[1, x'], [x, X]]`.
    pub fn bordered(&self) -> SymMatrix {
        let n = self.n();
        SymMatrix::from_fn(n + 1, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (i, 0) => self.x[i - 1],
            (0, j) => self.x[j - 1],
            (i, j) => self.lift[(i - 1, j - 1)],
        })
    }

    pub fn residuals(&self, s: f64) -> Residuals {
        let n = self.n();
        let diag = (0..n).map(|i| (self.lift[(i, i)] - self.x[i]).abs()).fold(0.0, f64::max);
        let sum = (self.x.iter().sum::<f64>() - s).abs();
        let row_sum = (0..n)
            .map(|i| (self.lift.row(i).iter().sum::<f64>() - s * self.x[i]).abs())
            .fold(0.0, f64::max);
        let min_eig = linalg::min_eigenvalue(&self.bordered());
        Residuals { diag, sum, row_sum, min_eig }
    }

    pub fn is_feasible(&self, s: f64) -> bool {
        self.residuals(s).feasible()
    }
}

/// `Φ(x, X) = (e - x, X + ee' - ex' - xe')`, the bijection between `P(n, s)`
/// and `Q(n, n - s)`.
pub fn phi_map(p: &LiftedPoint) -> LiftedPoint {
    let n = p.n();
    let x = &p.x;
    let y = x.iter().map(|v| 1.0 - v).collect();
    let lift = SymMatrix::from_fn(n, |i, j| p.lift[(i, j)] + 1.0 - x[i] - x[j]);
    LiftedPoint { x: y, lift }
}

/// `F1 = gamma1 C ∘ X + I - diag(x)`.
pub fn f1_matrix(c: &SymMatrix, gamma1: f64, p: &LiftedPoint) -> SymMatrix {
    let n = p.n();
    SymMatrix::from_fn(n, |i, j| {
        let base = gamma1 * c[(i, j)] * p.lift[(i, j)];
        if i == j {
            base + 1.0 - p.x[i]
        } else {
            base
        }
    })
}

/// `F2 = gamma2 C^{-1} ∘ (X + ee' - ex' - xe') + diag(x)`.
pub fn f2_matrix(cinv: &SymMatrix, gamma2: f64, p: &LiftedPoint) -> SymMatrix {
    let n = p.n();
    let x = &p.x;
    SymMatrix::from_fn(n, |i, j| {
        let y = p.lift[(i, j)] + 1.0 - x[i] - x[j];
        let base = gamma2 * cinv[(i, j)] * y;
        if i == j {
            base + x[i]
        } else {
            base
        }
    })
}

/// `f1 = ldet F1 - s log gamma1`.
pub fn f1_value(inst: &CovarianceInstance, s: usize, gamma1: f64, p: &LiftedPoint) -> Result<f64> {
    Ok(linalg::ldet(&f1_matrix(inst.cov(), gamma1, p))? - s as f64 * gamma1.ln())
}

/// `f2 = ldet F2 - (n - s) log gamma2 + ldet C`.
pub fn f2_value(inst: &CovarianceInstance, s: usize, gamma2: f64, p: &LiftedPoint) -> Result<f64> {
    let n = inst.n();
    Ok(linalg::ldet(&f2_matrix(inst.cov_inv(), gamma2, p))? - (n - s) as f64 * gamma2.ln() + inst.ldet_c())
}

/// Scaled BQP objective `ldet(gamma1 C ∘ X + I - diag(x)) - s log gamma1`.
pub fn bqp_objective(inst: &CovarianceInstance, s: usize, gamma1: f64, p: &LiftedPoint) -> Result<f64> {
    f1_value(inst, s, gamma1, p)
}

/// Strengthened mixed objective `(1 - alpha) f1 + alpha f2`.
pub fn mbqp_objective(inst: &CovarianceInstance, s: usize, params: &MixParams, p: &LiftedPoint) -> Result<f64> {
    params.validate()?;
    let mut v = 0.0;
    if params.alpha < 1.0 {
        v += (1.0 - params.alpha) * f1_value(inst, s, params.gamma1(), p)?;
    }
    if params.alpha > 0.0 {
        v += params.alpha * f2_value(inst, s, params.gamma2(), p)?;
    }
    Ok(v)
}

/// Two-variable mixed objective: `p ∈ P(n, s)`, `q = (y, Y) ∈ Q(n, n - s)`,
/// linked by `x + y = e`; the complementary term uses `Y` directly.
pub fn mbqp_twovar_objective(
    inst: &CovarianceInstance,
    s: usize,
    params: &MixParams,
    p: &LiftedPoint,
    q: &LiftedPoint,
) -> Result<f64> {
    params.validate()?;
    let n = inst.n();
    let residual = (0..n).map(|i| (p.x[i] + q.x[i] - 1.0).abs()).fold(0.0, f64::max);
    if residual > 1e-7 {
        return Err(MespError::LinkViolation { residual });
    }
    let mut v = 0.0;
    if params.alpha < 1.0 {
        v += (1.0 - params.alpha) * f1_value(inst, s, params.gamma1(), p)?;
    }
    if params.alpha > 0.0 {
        let gamma2 = params.gamma2();
        let cinv = inst.cov_inv();
        let f = SymMatrix::from_fn(n, |i, j| {
            let base = gamma2 * cinv[(i, j)] * q.lift[(i, j)];
            if i == j {
                base + 1.0 - q.x[i]
            } else {
                base
            }
        });
        v += params.alpha * (linalg::ldet(&f)? - (n - s) as f64 * gamma2.ln() + inst.ldet_c());
    }
    Ok(v)
}

/// Affine parametrization of `P(n, s)`: analytic center plus an orthonormal
/// basis of the directions that keep the linear constraints.
#[derive(Debug)]
pub struct BqpSpace {
    pub n: usize,
    pub s: usize,
    pub start: LiftedPoint,
    pub dirs: Vec<SymMatrix>,
}

impl BqpSpace {
    pub fn new(n: usize, s: usize) -> Result<Self> {
        if n < 2 || s == 0 || s >= n {
            return Err(MespError::InvalidParam(format!("lifted space needs 0 < s < n, got s = {s}, n = {n}")));
        }
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let index: HashMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let p = pairs.len();
        let sf = s as f64;
        let mut cons = Matrix::zeros(n + 1, p);
        for i in 0..n {
            for j in 0..n {
                let key = (i.min(j), i.max(j));
                let k = index[&key];
                let coef = if i == j { 1.0 - sf } else { 1.0 };
                cons.set(i, k, cons[(i, k)] + coef);
            }
            let k = index[&(i, i)];
            cons.set(n, k, 1.0);
        }
        let basis = linalg::null_space(&cons, 1e-10);
        let dirs = (0..basis.cols())
            .map(|col| {
                let mut d = SymMatrix::zeros(n);
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    d.set(i, j, basis[(k, col)]);
                }
                d
            })
            .collect();
        let x0 = sf / n as f64;
        let theta = sf * (n as f64 - sf) / (n as f64 * (n as f64 - 1.0));
        let lift = SymMatrix::from_fn(n, |i, j| {
            x0 * x0 + theta * (if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
        });
        Ok(BqpSpace { n, s, start: LiftedPoint { x: vec![x0; n], lift }, dirs })
    }

    /// Shared, lazily built space for `(n, s)`.
    pub fn cached(n: usize, s: usize) -> Result<Arc<BqpSpace>> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<BqpSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(sp) = cache.lock().expect("cache poisoned").get(&(n, s)) {
            return Ok(Arc::clone(sp));
        }
        let sp = Arc::new(BqpSpace::new(n, s)?);
        cache.lock().expect("cache poisoned").insert((n, s), Arc::clone(&sp));
        Ok(sp)
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    pub fn point(&self, z: &[f64]) -> LiftedPoint {
        let mut lift = self.start.lift.clone();
        for (d, &zk) in self.dirs.iter().zip(z) {
            if zk != 0.0 {
                lift.axpy(zk, d);
            }
        }
        let x = lift.diag();
        LiftedPoint { x, lift }
    }
}

/// Weights and parameters of a lifted solve:
/// `max w1 f1 + w2 f2 - tilt'x` over `P(n, s)`.
#[derive(Clone, Debug)]
pub struct LiftedProblem<'a> {
    pub w1: f64,
    pub w2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tilt: Option<&'a [f64]>,
}

#[derive(Clone, Debug)]
pub struct BqpOptions {
    pub tol: f64,
    pub mu0: f64,
    pub mu_factor: f64,
    pub mu_stop: f64,
    pub max_newton: usize,
}

impl Default for BqpOptions {
    fn default() -> Self {
        BqpOptions { tol: DEFAULT_TOL, mu0: 1.0, mu_factor: 0.2, mu_stop: 1e-8, max_newton: 600 }
    }
}

impl BqpOptions {
    pub fn with_tol(tol: f64) -> Self {
        BqpOptions { tol, ..BqpOptions::default() }
    }
}

/// Solution of a lifted solve.
#[derive(Clone, Debug)]
pub struct BqpSolution {
    pub report: BoundReport,
    pub point: LiftedPoint,
    pub f1: f64,
    pub f2: f64,
}

struct TermMatrices {
    f1: Option<SymMatrix>,
    f2: Option<SymMatrix>,
    border: SymMatrix,
}

fn term_matrices(inst: &CovarianceInstance, prob: &LiftedProblem, p: &LiftedPoint) -> TermMatrices {
    let n = p.n();
    let f1 = (prob.w1 > 0.0).then(|| f1_matrix(inst.cov(), prob.gamma1, p));
    let f2 = (prob.w2 > 0.0).then(|| f2_matrix(inst.cov_inv(), prob.gamma2, p));
    let border = SymMatrix::from_fn(n + 1, |i, j| match (i, j) {
        (0, 0) => 1.0,
        (i, 0) => p.x[i - 1],
        (0, j) => p.x[j - 1],
        (i, j) => p.lift[(i - 1, j - 1)] + 1.0,
    });
    TermMatrices { f1, f2, border }
}

struct Factored {
    f1: Option<Cholesky>,
    f2: Option<Cholesky>,
    border: Cholesky,
}

fn factor_terms(t: &TermMatrices) -> Result<Factored> {
    Ok(Factored {
        f1: t.f1.as_ref().map(Cholesky::factor).transpose()?,
        f2: t.f2.as_ref().map(Cholesky::factor).transpose()?,
        border: Cholesky::factor(&t.border)?,
    })
}

fn objective_parts(
    inst: &CovarianceInstance,
    s: usize,
    prob: &LiftedProblem,
    fac: &Factored,
    p: &LiftedPoint,
) -> (f64, f64, f64) {
    let n = inst.n();
    let f1 = fac.f1.as_ref().map_or(0.0, |c| c.ldet() - s as f64 * prob.gamma1.ln());
    let f2 = fac.f2.as_ref().map_or(0.0, |c| c.ldet() - (n - s) as f64 * prob.gamma2.ln() + inst.ldet_c());
    let lin = prob.tilt.map_or(0.0, |t| linalg::dot(t, &p.x));
    (f1, f2, prob.w1 * f1 + prob.w2 * f2 - lin)
}

/// Packed lower triangle with off-diagonal entries scaled by √2 so that the
/// Euclidean inner product equals the trace inner product.
fn pack(m: &SymMatrix, out: &mut Vec<f64>) {
    let n = m.n();
    out.clear();
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in 0..i {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
}

fn direction_f1(c: &SymMatrix, gamma1: f64, d: &SymMatrix) -> SymMatrix {
    let n = d.n();
    SymMatrix::from_fn(n, |i, j| {
        let a = gamma1 * c[(i, j)] - if i == j { 1.0 } else { 0.0 };
        a * d[(i, j)]
    })
}

fn direction_f2(cinv: &SymMatrix, gamma2: f64, d: &SymMatrix) -> SymMatrix {
    let n = d.n();
    SymMatrix::from_fn(n, |i, j| {
        let y = d[(i, j)] - d[(i, i)] - d[(j, j)];
        let base = gamma2 * cinv[(i, j)] * y;
        if i == j {
            base + d[(i, i)]
        } else {
            base
        }
    })
}

fn direction_border(d: &SymMatrix) -> SymMatrix {
    let n = d.n();
    SymMatrix::from_fn(n + 1, |i, j| match (i, j) {
        (0, 0) => 0.0,
        (i, 0) => d[(i - 1, i - 1)],
        (0, j) => d[(j - 1, j - 1)],
        (i, j) => d[(i - 1, j - 1)],
    })
}

/// Adds `weight * <S_k, S_l>` to `h` and `weight * trace(S_k)` to `g`, for
/// `S_k = L^{-1} A_k L^{-T}`.
fn accumulate(ch: &Cholesky, dirs: &[SymMatrix], weight: f64, g: &mut [f64], h: &mut SymMatrix) {
    let m = dirs.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut buf = Vec::new();
    for (k, a) in dirs.iter().enumerate() {
        let w = ch.whiten(a);
        g[k] += weight * w.diag().iter().sum::<f64>();
        pack(&w, &mut buf);
        rows.push(buf.clone());
    }
    for k in 0..m {
        for l in 0..=k {
            let v = linalg::dot(&rows[k], &rows[l]);
            h.add_to(k, l, weight * v);
        }
    }
}

/// Core lifted solver: `max w1 f1 + w2 f2 - tilt'x` over `P(n, s)`.
pub fn solve_lifted(
    inst: &CovarianceInstance,
    s: usize,
    prob: &LiftedProblem,
    opts: &BqpOptions,
) -> Result<BqpSolution> {
    let started = Instant::now();
    let n = inst.n();
    if s > n {
        return Err(MespError::InvalidParam(format!("s = {s} exceeds n = {n}")));
    }
    if !(prob.gamma1 > 0.0 && prob.gamma2 > 0.0) {
        return Err(MespError::InvalidParam("scaling parameters must be positive".into()));
    }
    if prob.w1 < 0.0 || prob.w2 < 0.0 {
        return Err(MespError::InvalidParam("term weights must be nonnegative".into()));
    }
    let params = MixParams { alpha: 0.0, psi1: prob.gamma1.ln(), psi2: prob.gamma2.ln() };
    if s == 0 || s == n {
        let x = vec![if s == n { 1.0 } else { 0.0 }; n];
        let point = LiftedPoint::from_binary(&x);
        let f1 = f1_value(inst, s, prob.gamma1, &point)?;
        let f2 = f2_value(inst, s, prob.gamma2, &point)?;
        let lin = prob.tilt.map_or(0.0, |t| linalg::dot(t, &x));
        let value = prob.w1 * f1 + prob.w2 * f2 - lin;
        let mut report = BoundReport::new(value, x);
        report.terms = Some((f1, f2));
        report.params = params;
        report.wall_time = started.elapsed();
        return Ok(BqpSolution { report, point, f1, f2 });
    }
    let space = BqpSpace::cached(n, s)?;
    let m = space.dim();
    let mut z = vec![0.0; m];
    let mut point = space.point(&z);
    let mut fac = factor_terms(&term_matrices(inst, prob, &point))?;

    let tilt_dir: Vec<f64> = match prob.tilt {
        Some(t) => space.dirs.iter().map(|d| linalg::dot(t, &d.diag())).collect(),
        None => vec![0.0; m],
    };
    let dirs_f1: Vec<SymMatrix> = if prob.w1 > 0.0 {
        space.dirs.iter().map(|d| direction_f1(inst.cov(), prob.gamma1, d)).collect()
    } else {
        Vec::new()
    };
    let dirs_f2: Vec<SymMatrix> = if prob.w2 > 0.0 {
        space.dirs.iter().map(|d| direction_f2(inst.cov_inv(), prob.gamma2, d)).collect()
    } else {
        Vec::new()
    };
    let dirs_b: Vec<SymMatrix> = space.dirs.iter().map(direction_border).collect();

    let nu = (n + 1) as f64;
    let mu_stop = opts.mu_stop.min(opts.tol / nu);
    let mut mu = opts.mu0;
    let mut iterations = 0;
    let mut decrement_final;
    let mut flags = Vec::new();
    loop {
        let last_mu = mu <= mu_stop;
        let mut inner = 0;
        loop {
            let mut g: Vec<f64> = tilt_dir.iter().map(|v| -v).collect();
            let mut h = SymMatrix::zeros(m);
            if let Some(ch) = &fac.f1 {
                accumulate(ch, &dirs_f1, prob.w1, &mut g, &mut h);
            }
            if let Some(ch) = &fac.f2 {
                accumulate(ch, &dirs_f2, prob.w2, &mut g, &mut h);
            }
            accumulate(&fac.border, &dirs_b, mu, &mut g, &mut h);
            // h holds the negated Hessian, a sum of Gram matrices; a failed
            // factorization is roundoff
            let kch = barrier::factor_newton(&h, true)?;
            let dz = kch.solve_vec(&g);
            let decrement = linalg::dot(&g, &dz);
            if !decrement.is_finite() {
                return Err(MespError::NonfiniteStep);
            }
            decrement_final = decrement.max(0.0).sqrt();
            let threshold = if last_mu { 1e-18 } else { (1e-3 * mu).max(1e-18) };
            if decrement <= threshold {
                break;
            }
            if iterations >= opts.max_newton {
                flags.push(Flag::MaxIterations);
                break;
            }
            let (_, _, phi0) = objective_parts(inst, s, prob, &fac, &point);
            let phi0 = phi0 + mu * fac.border.ldet();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let zt: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + t * b).collect();
                let pt = space.point(&zt);
                if let Ok(ft) = factor_terms(&term_matrices(inst, prob, &pt)) {
                    let (_, _, phit) = objective_parts(inst, s, prob, &ft, &pt);
                    let phit = phit + mu * ft.border.ldet();
                    if phit >= phi0 + 1e-4 * t * decrement {
                        z = zt;
                        point = pt;
                        fac = ft;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            iterations += 1;
            inner += 1;
            if !accepted || (last_mu && inner > 12) {
                break;
            }
        }
        if last_mu || flags.contains(&Flag::MaxIterations) {
            break;
        }
        mu *= opts.mu_factor;
    }
    let (f1, f2, value) = objective_parts(inst, s, prob, &fac, &point);
    let mut report = BoundReport::new(value, point.x.clone());
    report.iterations = iterations;
    report.kkt_residual = decrement_final.max(mu * nu);
    report.terms = Some((f1, f2));
    report.params = params;
    for f in flags {
        report.flag(f);
    }
    report.wall_time = started.elapsed();
    Ok(BqpSolution { report, point, f1, f2 })
}

/// Strengthened mixed BQP bound at fixed parameters.
pub fn solve_mbqp(inst: &CovarianceInstance, s: usize, params: &MixParams, tol: f64) -> Result<BqpSolution> {
    solve_mbqp_with(inst, s, params, None, &BqpOptions::with_tol(tol))
}

pub fn solve_mbqp_with(
    inst: &CovarianceInstance,
    s: usize,
    params: &MixParams,
    tilt: Option<&[f64]>,
    opts: &BqpOptions,
) -> Result<BqpSolution> {
    params.validate()?;
    let prob = LiftedProblem {
        w1: 1.0 - params.alpha,
        w2: params.alpha,
        gamma1: params.gamma1(),
        gamma2: params.gamma2(),
        tilt,
    };
    let mut sol = solve_lifted(inst, s, &prob, opts)?;
    sol.report.params = *params;
    Ok(sol)
}

/// Scaled BQP bound (`alpha = 0` of the mixed bound, solved with only the
/// first term present).
pub fn solve_bqp(inst: &CovarianceInstance, s: usize, gamma1: f64, tol: f64) -> Result<BqpSolution> {
    let prob = LiftedProblem { w1: 1.0, w2: 0.0, gamma1, gamma2: 1.0, tilt: None };
    solve_lifted(inst, s, &prob, &BqpOptions::with_tol(tol))
}

/// Scaled complementary BQP bound: the BQP bound of `(C^{-1}, n - s)` shifted
/// by `ldet C`. The reported optimizer is mapped back to selection space.
pub fn solve_cbqp(inst: &CovarianceInstance, s: usize, gamma2: f64, tol: f64) -> Result<BqpSolution> {
    let (comp, shift) = inst.complement();
    let n = inst.n();
    let mut sol = solve_bqp(&comp, n - s, gamma2, tol)?;
    sol.report.value += shift;
    sol.report.optimizer_x = sol.report.optimizer_x.iter().map(|v| 1.0 - v).collect();
    sol.report.params = MixParams { alpha: 1.0, psi1: 0.0, psi2: gamma2.ln() };
    sol.f1 += shift;
    sol.report.terms = Some((f64::NAN, sol.f1));
    sol.f2 = sol.f1;
    sol.point = phi_map(&sol.point);
    Ok(sol)
}

/// Entries of `G(psi1, psi2)` and the diagonal of its Jacobian at a fixed
/// lifted point.
#[derive(Clone, Copy, Debug)]
pub struct PsiDerivatives {
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
    pub h2: f64,
}

/// `G = (n - s - F1^{-1} • (I - diag x), s - F2^{-1} • diag x)` and
/// `H = diag(gamma1 (e - x)' diag(F1^{-1} (C∘X) F1^{-1}),
///           gamma2 x' diag(F2^{-1} (C^{-1} ∘ Y) F2^{-1}))`.
pub fn psi_derivatives(inst: &CovarianceInstance, s: usize, params: &MixParams, p: &LiftedPoint) -> Result<PsiDerivatives> {
    let n = inst.n();
    let x = &p.x;
    let (gamma1, gamma2) = (params.gamma1(), params.gamma2());
    let f1inv = linalg::inverse(&f1_matrix(inst.cov(), gamma1, p))?;
    let f2inv = linalg::inverse(&f2_matrix(inst.cov_inv(), gamma2, p))?;
    let g1 = (n - s) as f64 - (0..n).map(|i| f1inv[(i, i)] * (1.0 - x[i])).sum::<f64>();
    let g2 = s as f64 - (0..n).map(|i| f2inv[(i, i)] * x[i]).sum::<f64>();
    let cx = linalg::hadamard(inst.cov(), &p.lift)?;
    let y = phi_map(p).lift;
    let by = linalg::hadamard(inst.cov_inv(), &y)?;
    let m1 = f1inv.matmul(&cx)?.matmul(&f1inv.to_matrix())?;
    let m2 = f2inv.matmul(&by)?.matmul(&f2inv.to_matrix())?;
    let h1 = gamma1 * (0..n).map(|i| (1.0 - x[i]) * m1[(i, i)]).sum::<f64>();
    let h2 = gamma2 * (0..n).map(|i| x[i] * m2[(i, i)]).sum::<f64>();
    Ok(PsiDerivatives { g1, g2, h1, h2 })
}
