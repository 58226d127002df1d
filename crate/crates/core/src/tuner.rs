//! Parameter optimization for the strengthened mixed BQP bound: an
//! interior-point update of `alpha`, a Newton update of `(psi1, psi2)`, and
//! the alternating driver.

use serde::{Deserialize, Serialize};

use crate::bqp::{self, BqpOptions, BqpSolution, LiftedPoint};
use crate::error::{MespError, Result};
use crate::instance::CovarianceInstance;
use crate::report::{BoundReport, Flag, MixParams, TrailEntry};

pub const TAU_ALPHA: f64 = 0.9;
pub const TAU_MU: f64 = 0.1;
/// Diagonal curvature entries at or below this are treated as singular.
pub const MIN_CURVATURE: f64 = 1e-14;
/// Largest accepted `|delta psi_i|` in one Newton step.
pub const MAX_PSI_STEP: f64 = 2.0;

/// Iteration counts and tolerances of [`alternate_tune`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneBudget {
    pub rounds: usize,
    pub alpha_steps: usize,
    pub psi_steps: usize,
    pub mu_start: f64,
    pub mu_end: f64,
    /// Hard cap on relaxation solves, including the initial one.
    pub max_solves: usize,
    pub residual_tol: f64,
    pub solve_tol: f64,
}

impl Default for TuneBudget {
    fn default() -> Self {
        TuneBudget {
            rounds: 4,
            alpha_steps: 5,
            psi_steps: 5,
            mu_start: 1e-1,
            mu_end: 1e-6,
            max_solves: 400,
            residual_tol: 1e-6,
            solve_tol: bqp::DEFAULT_TOL,
        }
    }
}

/// State of the tuning iteration.
#[derive(Clone, Debug)]
pub struct TunerState {
    pub k: usize,
    pub alpha: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub mu: f64,
    pub b: f64,
    pub f1_star: f64,
    pub f2_star: f64,
    /// Bound value at the current parameters.
    pub value: f64,
    pub last_point: LiftedPoint,
    pub last_report: BoundReport,
    /// Last residual of the alpha barrier equation.
    pub r: f64,
    /// Last `|G|_inf` of the psi equations.
    pub g_norm: f64,
    pub solves: usize,
    pub solve_tol: f64,
}

impl TunerState {
    pub fn params(&self) -> MixParams {
        MixParams { alpha: self.alpha, psi1: self.psi1, psi2: self.psi2 }
    }

    /// Solves the relaxation at `params` and builds a fresh state.
    pub fn init(inst: &CovarianceInstance, s: usize, params: &MixParams, solve_tol: f64) -> Result<Self> {
        let sol = bqp::solve_mbqp(inst, s, params, solve_tol)?;
        let mut st = TunerState {
            k: 0,
            alpha: params.alpha,
            psi1: params.psi1,
            psi2: params.psi2,
            mu: 1e-1,
            b: 1.0,
            f1_star: 0.0,
            f2_star: 0.0,
            value: 0.0,
            last_point: sol.point.clone(),
            last_report: sol.report.clone(),
            r: f64::NAN,
            g_norm: f64::NAN,
            solves: 0,
            solve_tol,
        };
        st.absorb(inst, s, sol)?;
        Ok(st)
    }

    /// Stores a solve; both per-term values are evaluated at the optimizer so
    /// that they are available at the endpoints as well.
    fn absorb(&mut self, inst: &CovarianceInstance, s: usize, sol: BqpSolution) -> Result<()> {
        let p = self.params();
        self.f1_star = bqp::f1_value(inst, s, p.gamma1(), &sol.point)?;
        self.f2_star = bqp::f2_value(inst, s, p.gamma2(), &sol.point)?;
        self.value = sol.report.value;
        self.last_point = sol.point;
        self.last_report = sol.report;
        self.solves += 1;
        Ok(())
    }

    fn resolve(&mut self, inst: &CovarianceInstance, s: usize) -> Result<()> {
        let sol = bqp::solve_mbqp_with(inst, s, &self.params(), None, &BqpOptions::with_tol(self.solve_tol))?;
        self.absorb(inst, s, sol)
    }

    pub fn trail_entry(&self) -> TrailEntry {
        TrailEntry {
            k: self.k,
            alpha: self.alpha,
            psi1: self.psi1,
            psi2: self.psi2,
            value: self.value,
            residual: self.r,
            g_norm: self.g_norm,
        }
    }

    /// `L_mu(alpha) = V(alpha) - mu (log alpha + log(1 - alpha))`.
    pub fn barrier_value(&self) -> f64 {
        self.value - self.mu * (self.alpha.ln() + (1.0 - self.alpha).ln())
    }

    /// Residual `r = -f1* + f2* - mu/alpha + mu/(1 - alpha)`.
    pub fn alpha_residual(&self) -> f64 {
        -self.f1_star + self.f2_star - self.mu / self.alpha + self.mu / (1.0 - self.alpha)
    }
}

/// `theta_hat = tau_alpha min{1, max theta keeping alpha + theta delta in [0, 1]}`.
pub fn alpha_step_length(alpha: f64, delta: f64) -> f64 {
    let mut t: f64 = 1.0;
    if delta < 0.0 {
        t = t.min(-alpha / delta);
    } else if delta > 0.0 {
        t = t.min((1.0 - alpha) / delta);
    }
    TAU_ALPHA * t
}

/// One interior-point update of `alpha` at fixed `(psi1, psi2)`.
pub fn alpha_step(state: &TunerState, inst: &CovarianceInstance, s: usize) -> Result<TunerState> {
    let a = state.alpha;
    if !(a > 0.0 && a < 1.0) {
        return Err(MespError::InvalidParam(format!("alpha must lie in (0, 1) for alpha steps, got {a}")));
    }
    let mu = state.mu;
    let r = state.alpha_residual();
    let delta = -r / (state.b + mu / (a * a) + mu / ((1.0 - a) * (1.0 - a)));
    let theta = alpha_step_length(a, delta);
    let mut next = state.clone();
    next.k += 1;
    next.r = r;
    let new_alpha = a + theta * delta;
    if new_alpha == a {
        return Ok(next);
    }
    next.alpha = new_alpha;
    next.resolve(inst, s)?;
    let da = new_alpha - a;
    let d1 = (next.f1_star - state.f1_star) / da;
    let d2 = (next.f2_star - state.f2_star) / da;
    if -d1 + d2 > 0.0 {
        next.b = -d1 + d2;
    }
    next.r = next.alpha_residual();
    Ok(next)
}

/// `G` and the diagonal of its Jacobian at the current optimizer.
pub fn psi_system(state: &TunerState, inst: &CovarianceInstance, s: usize) -> Result<bqp::PsiDerivatives> {
    bqp::psi_derivatives(inst, s, &state.params(), &state.last_point)
}

/// One Newton update of `(psi1, psi2)` at fixed `alpha`. Only the
/// coordinates whose term carries weight are moved. Returns the new state
/// and whether a coordinate had singular curvature.
pub fn psi_step(state: &TunerState, inst: &CovarianceInstance, s: usize) -> Result<(TunerState, bool)> {
    let d = psi_system(state, inst, s)?;
    let mut next = state.clone();
    next.k += 1;
    let mut singular = false;
    let mut moved = false;
    let active1 = state.alpha < 1.0;
    let active2 = state.alpha > 0.0;
    let g_norm = match (active1, active2) {
        (true, true) => d.g1.abs().max(d.g2.abs()),
        (true, false) => d.g1.abs(),
        _ => d.g2.abs(),
    };
    next.g_norm = g_norm;
    if active1 && d.g1 != 0.0 {
        if d.h1 <= MIN_CURVATURE {
            singular = true;
        } else {
            next.psi1 += (-d.g1 / d.h1).clamp(-MAX_PSI_STEP, MAX_PSI_STEP);
            moved = true;
        }
    }
    if active2 && d.g2 != 0.0 {
        if d.h2 <= MIN_CURVATURE {
            singular = true;
        } else {
            next.psi2 += (-d.g2 / d.h2).clamp(-MAX_PSI_STEP, MAX_PSI_STEP);
            moved = true;
        }
    }
    if moved {
        next.resolve(inst, s)?;
        let d = psi_system(&next, inst, s)?;
        next.g_norm = match (active1, active2) {
            (true, true) => d.g1.abs().max(d.g2.abs()),
            (true, false) => d.g1.abs(),
            _ => d.g2.abs(),
        };
    }
    Ok((next, singular))
}

struct Best {
    params: MixParams,
    report: BoundReport,
}

fn consider(best: &mut Best, st: &TunerState) {
    if st.value < best.report.value {
        best.params = st.params();
        best.report = st.last_report.clone();
        best.report.params = st.params();
    }
}

/// Newton iteration on one scaling parameter with `alpha` fixed at an
/// endpoint; returns the tuned `psi` and the final state.
pub fn tune_endpoint(
    inst: &CovarianceInstance,
    s: usize,
    which: usize,
    psi0: f64,
    steps: usize,
    solve_tol: f64,
) -> Result<(f64, BoundReport)> {
    let params = if which == 1 { MixParams::new(0.0, psi0, 0.0)? } else { MixParams::new(1.0, 0.0, psi0)? };
    let mut st = TunerState::init(inst, s, &params, solve_tol)?;
    let mut best = Best { params: st.params(), report: st.last_report.clone() };
    for _ in 0..steps {
        let (next, singular) = psi_step(&st, inst, s)?;
        let converged = next.g_norm < 1e-6;
        st = next;
        consider(&mut best, &st);
        if singular || converged {
            break;
        }
    }
    let psi = if which == 1 { best.params.psi1 } else { best.params.psi2 };
    Ok((psi, best.report))
}

/// Mixing weight 1/2 with each scaling parameter tuned at its endpoint.
pub fn endpoint_init(inst: &CovarianceInstance, s: usize, budget: &TuneBudget) -> Result<MixParams> {
    let (psi1, _) = tune_endpoint(inst, s, 1, 0.0, budget.psi_steps * 2, budget.solve_tol)?;
    let (psi2, _) = tune_endpoint(inst, s, 2, 0.0, budget.psi_steps * 2, budget.solve_tol)?;
    MixParams::new(0.5, psi1, psi2)
}

/// Alternates blocks of alpha steps (a decreasing `mu` schedule) with blocks
/// of psi steps and returns the best bound seen, never worse than the bound
/// at `init`.
pub fn alternate_tune(
    inst: &CovarianceInstance,
    s: usize,
    init: &MixParams,
    budget: &TuneBudget,
) -> Result<(MixParams, BoundReport)> {
    init.validate()?;
    let n = inst.n();
    let mut st = TunerState::init(inst, s, init, budget.solve_tol)?;
    let mut best = Best { params: st.params(), report: st.last_report.clone() };
    best.report.params = st.params();
    let mut trail = vec![st.trail_entry()];
    let mut flags = Vec::new();
    if s == 0 || s == n {
        best.report.trail = trail;
        return Ok((best.params, best.report));
    }
    if st.alpha <= 0.0 || st.alpha >= 1.0 {
        // alpha iterations need an interior start
        st.alpha = 0.5;
        st.resolve(inst, s)?;
        consider(&mut best, &st);
        trail.push(st.trail_entry());
    }
    let out_of_budget = |st: &TunerState| st.solves >= budget.max_solves;
    'rounds: for _ in 0..budget.rounds {
        // alpha block
        st.mu = budget.mu_start;
        st.b = 1.0;
        while st.mu >= budget.mu_end * (1.0 - 1e-12) {
            for _ in 0..budget.alpha_steps {
                if out_of_budget(&st) {
                    flags.push(Flag::BudgetExhausted);
                    break 'rounds;
                }
                let before = st.barrier_value();
                st = alpha_step(&st, inst, s)?;
                if st.barrier_value() > before + 1e-9 * before.abs().max(1.0) {
                    flags.push(Flag::NonMonotoneStep);
                }
                consider(&mut best, &st);
                trail.push(st.trail_entry());
                if st.r.abs() < budget.residual_tol {
                    break;
                }
            }
            st.mu *= TAU_MU;
        }
        // psi block
        for _ in 0..budget.psi_steps {
            if out_of_budget(&st) {
                flags.push(Flag::BudgetExhausted);
                break 'rounds;
            }
            let (next, singular) = psi_step(&st, inst, s)?;
            if next.value > st.value + 1e-9 * st.value.abs().max(1.0) {
                flags.push(Flag::NonMonotoneStep);
            }
            st = next;
            consider(&mut best, &st);
            trail.push(st.trail_entry());
            if singular {
                flags.push(Flag::SingularCurvature);
                break;
            }
            if st.g_norm < budget.residual_tol {
                break;
            }
        }
        st.r = st.alpha_residual();
        if st.r.abs() < budget.residual_tol && st.g_norm < budget.residual_tol {
            break;
        }
    }
    for f in flags {
        best.report.flag(f);
    }
    best.report.trail = trail;
    best.report.iterations = st.solves;
    Ok((best.params, best.report))
}
