//! Lagrangian mixing of two bounds.
//!
//! The selection vector is duplicated, `x` for bound A and `y` for bound B,
//! and the link `x = y` is dualized with multiplier `pi`:
//!
//! `L(pi) = max_x [alpha f_A(x) - pi'x] + max_y [(1 - alpha) f_B(y) + pi'y]`.
//!
//! Every `L(pi)` is an upper bound on the MESP optimum, and `L` is convex
//! with subgradient `y* - x*`. Complementary bounds are evaluated in
//! selection space (their variable is `e - x`), which carries the constant
//! `pi'e` and the `ldet C` shift inside the subproblem value.

use log::warn;
use rayon::join;
use serde::{Deserialize, Serialize};

use crate::bound::{self, BoundEffort, BoundKind};
use crate::error::{MespError, Result};
use crate::instance::{self, CovarianceInstance};
use crate::linalg;
use crate::report::{BoundReport, Flag, MixParams};

pub const DEFAULT_ITERS: usize = 200;

/// Multipliers and Lagrangian weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualTilt {
    pub pi: Vec<f64>,
    pub alpha: f64,
}

impl DualTilt {
    pub fn new(pi: Vec<f64>, alpha: f64) -> Result<Self> {
        if pi.iter().any(|v| !v.is_finite()) {
            return Err(MespError::InvalidParam("multipliers must be finite".into()));
        }
        MixParams::new(alpha, 0.0, 0.0)?;
        Ok(DualTilt { pi, alpha })
    }
}

/// One subproblem: a bound family with fixed parameters, a weight and a tilt.
#[derive(Clone, Debug)]
pub struct TiltedBoundQuery<'a> {
    pub which: BoundKind,
    pub params: MixParams,
    pub weight: f64,
    pub tilt: &'a [f64],
}

/// A bound family with its (typically tuned) parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixComponent {
    pub kind: BoundKind,
    pub params: MixParams,
}

impl MixComponent {
    /// Tunes the family's parameters on the instance.
    pub fn tuned(kind: BoundKind, inst: &CovarianceInstance, s: usize, effort: &BoundEffort) -> Result<Self> {
        if !kind.tiltable() {
            return Err(MespError::InvalidParam(format!("{kind} cannot take part in Lagrangian mixing")));
        }
        let r = bound::tune(kind, inst, s, None, effort)?;
        Ok(MixComponent { kind, params: r.params })
    }
}

/// Subproblem report: `upper_bound()` over-estimates the subproblem maximum,
/// `optimizer_x` is the maximizer in selection space and `params` the
/// parameters actually used.
pub fn solve_tilted(inst: &CovarianceInstance, s: usize, query: &TiltedBoundQuery, tol: f64) -> Result<BoundReport> {
    bound::solve_tilted(query.which, inst, s, &query.params, query.weight, query.tilt, tol)
}

/// Dual value `L(pi)` and subgradient `y* - x*`.
#[derive(Clone, Debug)]
pub struct DualEval {
    pub value: f64,
    pub subgrad: Vec<f64>,
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
    /// Components as evaluated. An NLP subproblem that loses concavity under
    /// the tilt is solved at its fallback scaling and reports it here.
    pub used_a: MixComponent,
    pub used_b: MixComponent,
}

pub fn dual_eval(
    inst: &CovarianceInstance,
    s: usize,
    dt: &DualTilt,
    a: &MixComponent,
    b: &MixComponent,
    tol: f64,
) -> Result<DualEval> {
    let n = inst.n();
    if dt.pi.len() != n {
        return Err(MespError::DimensionMismatch { expected: n, found: dt.pi.len() });
    }
    let neg: Vec<f64> = dt.pi.iter().map(|v| -v).collect();
    let qa = TiltedBoundQuery { which: a.kind, params: a.params, weight: dt.alpha, tilt: &dt.pi };
    let qb = TiltedBoundQuery { which: b.kind, params: b.params, weight: 1.0 - dt.alpha, tilt: &neg };
    let (ra, rb) = join(|| solve_tilted(inst, s, &qa, tol), || solve_tilted(inst, s, &qb, tol));
    let (ra, rb) = (ra?, rb?);
    let subgrad = rb.optimizer_x.iter().zip(&ra.optimizer_x).map(|(y, x)| y - x).collect();
    let used = |c: &MixComponent, r: &BoundReport| {
        if r.has_flag(Flag::SkippedParameter) {
            MixComponent { kind: c.kind, params: r.params }
        } else {
            *c
        }
    };
    Ok(DualEval {
        value: ra.upper_bound() + rb.upper_bound(),
        subgrad,
        used_a: used(a, &ra),
        used_b: used(b, &rb),
        x_a: ra.optimizer_x,
        x_b: rb.optimizer_x,
    })
}

/// One row of the subgradient trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixTraceEntry {
    pub t: usize,
    pub value: f64,
    pub best: f64,
    pub g_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixResult {
    /// Best dual value in `value`; the `A` maximizer at the best multiplier
    /// in `optimizer_x`.
    pub report: BoundReport,
    pub best_pi: Vec<f64>,
    /// Dual value at `pi = 0`.
    pub value_at_zero: f64,
    pub trace: Vec<MixTraceEntry>,
}

/// Subgradient descent on `L(pi)` from `pi = 0` with steps
/// `eta_t = lambda eta_0 / sqrt(t + 1)`, `eta_0 = (L(0) - lb) / |g_0|^2` where
/// `lb` is the greedy heuristic value. `lambda` starts at 1 and halves after
/// every step that fails to improve the best value, which also restarts from
/// the best multiplier. An NLP component that falls back to another scaling
/// keeps that scaling for the remaining iterations, and the descent restarts
/// on that dual function. Returns the best dual
/// value seen; every iterate's value is a valid bound.
pub fn subgradient_optimize(
    inst: &CovarianceInstance,
    s: usize,
    alpha: f64,
    a: &MixComponent,
    b: &MixComponent,
    iters: usize,
    tol: f64,
) -> Result<MixResult> {
    if iters == 0 {
        return Err(MespError::InvalidParam("iters must be at least 1".into()));
    }
    let n = inst.n();
    let mut pi = vec![0.0; n];
    let mut dt = DualTilt::new(pi.clone(), alpha)?;
    let first = dual_eval(inst, s, &dt, a, b, tol)?;
    let (mut a, mut b) = (first.used_a, first.used_b);
    let lb = if s == 0 { 0.0 } else { instance::greedy_heuristic(inst, s)?.0 };
    let value_at_zero = first.value;
    let g0 = linalg::norm2(&first.subgrad);
    let eta0 = if g0 > 0.0 { (first.value - lb).max(0.0) / (g0 * g0) } else { 0.0 };
    // `best` is over all iterates; `anchor` is the best point of the dual
    // function currently being minimized and drives the step control
    let mut best = (first.value, pi.clone(), first.x_a.clone());
    let mut anchor = (first.value, pi.clone(), first.subgrad.clone());
    let mut trace = vec![MixTraceEntry { t: 0, value: first.value, best: first.value, g_norm: g0, step: 0.0 }];
    let mut scale = 1.0;
    let mut iterations = 1;
    for t in 0..iters.saturating_sub(1) {
        if linalg::norm2(&anchor.2) == 0.0 || eta0 == 0.0 {
            break;
        }
        let eta = scale * eta0 / ((t + 1) as f64).sqrt();
        pi.clone_from(&anchor.1);
        linalg::axpy(-eta, &anchor.2, &mut pi);
        dt.pi.clone_from(&pi);
        let current = match dual_eval(inst, s, &dt, &a, &b, tol) {
            Ok(ev) => ev,
            // a subproblem left its concave domain: treat as an overshoot
            Err(MespError::ConcavityViolation | MespError::NotPositiveDefinite { .. }) => {
                warn!("subproblem failed at iteration {}; shrinking the step", t + 1);
                iterations += 1;
                scale *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        let g_norm = linalg::norm2(&current.subgrad);
        if current.value < best.0 {
            best = (current.value, pi.clone(), current.x_a.clone());
        }
        if current.used_a != a || current.used_b != b {
            // minimize the fallback dual function from here on
            warn!("mixing components switched to fallback scaling at iteration {}", t + 1);
            a = current.used_a;
            b = current.used_b;
            anchor = (current.value, pi.clone(), current.subgrad);
        } else if current.value < anchor.0 {
            anchor = (current.value, pi.clone(), current.subgrad);
        } else {
            // overshoot: shrink the scale and step again from the anchor
            scale *= 0.5;
        }
        trace.push(MixTraceEntry { t: t + 1, value: current.value, best: best.0, g_norm, step: eta });
    }
    let mut report = BoundReport::new(best.0, best.2);
    report.params = MixParams { alpha, psi1: a.params.psi1, psi2: b.params.psi2 };
    report.iterations = iterations;
    report.dual_value = Some(best.0);
    Ok(MixResult { report, best_pi: best.1, value_at_zero, trace })
}
