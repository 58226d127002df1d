//! Uniform front end over the bound families.
//!
//! Every family is parametrized by a [`MixParams`]: single-scaling bounds use
//! `psi1` (direct) or `psi2` (complementary), mixed bounds use all three
//! fields. NLP bounds recompute the trace-optimal diagonal for the instance
//! they are evaluated on and clamp `gamma` into its admissible interval, so
//! parameters carry over between related instances (branch-and-bound nodes).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::barrier::BarrierOptions;
use crate::bqp::{self, BqpOptions, LiftedProblem};
use crate::error::{MespError, Result};
use crate::instance::CovarianceInstance;
use crate::linx::{self, LinxSolve};
use crate::nlp::{self, NlpObjective, NlpParams, NlpSolve};
use crate::report::{BoundReport, Flag, MixParams};
use crate::tuner::{self, TuneBudget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Linx,
    Bqp,
    Cbqp,
    Nlp,
    Cnlp,
    Mbqp,
    Mnlp,
}

impl BoundKind {
    pub const ALL: [BoundKind; 7] = [
        BoundKind::Linx,
        BoundKind::Bqp,
        BoundKind::Cbqp,
        BoundKind::Nlp,
        BoundKind::Cnlp,
        BoundKind::Mbqp,
        BoundKind::Mnlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Linx => "linx",
            BoundKind::Bqp => "bqp",
            BoundKind::Cbqp => "cbqp",
            BoundKind::Nlp => "nlp",
            BoundKind::Cnlp => "cnlp",
            BoundKind::Mbqp => "mbqp",
            BoundKind::Mnlp => "mnlp",
        }
    }

    /// Whether the family accepts a linear tilt (usable in Lagrangian mixing).
    pub fn tiltable(self) -> bool {
        !matches!(self, BoundKind::Mbqp | BoundKind::Mnlp)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = MespError;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MespError::InvalidParam(format!("unknown bound kind '{s}'")))
    }
}

/// Accuracy and tuning effort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEffort {
    pub tol: f64,
    /// Target `|G(psi)|` for linx tuning.
    pub linx_g_tol: f64,
    pub gamma_grid: usize,
    pub tune: TuneBudget,
}

impl Default for BoundEffort {
    fn default() -> Self {
        BoundEffort { tol: 1e-7, linx_g_tol: 1e-6, gamma_grid: nlp::GAMMA_GRID_SIZE, tune: TuneBudget::default() }
    }
}

/// Fractions of the requested log-distance above the lower end of the gamma
/// interval tried, in order, after a concavity failure.
const FALLBACK_SHRINK: [f64; 3] = [0.5, 0.25, 0.0];

/// Runs `attempt` at the requested scaling, then at the fallback scalings;
/// a fallback result is flagged `SkippedParameter`.
fn with_nlp_fallback(attempt: impl Fn(f64) -> Result<BoundReport>) -> Result<BoundReport> {
    // gamma too large: the objective is not concave or leaves its domain
    let too_large = |e: &MespError| matches!(e, MespError::ConcavityViolation | MespError::NotPositiveDefinite { .. });
    let mut last = match attempt(1.0) {
        Err(e) if too_large(&e) => e,
        other => return other,
    };
    for shrink in FALLBACK_SHRINK {
        match attempt(shrink) {
            Ok(mut rep) => {
                rep.flag(Flag::SkippedParameter);
                return Ok(rep);
            }
            Err(e) if too_large(&e) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Solves an NLP-family objective, falling back towards the lower end of the
/// gamma interval(s) on a concavity failure.
fn solve_nlp_family(build: impl Fn(f64) -> Result<(NlpObjective, MixParams)>, s: usize, tol: f64) -> Result<BoundReport> {
    let opts = NlpSolve { tol, ..NlpSolve::default() };
    with_nlp_fallback(|shrink| {
        let (obj, params) = build(shrink)?;
        let mut rep = nlp::solve_objective(&obj, s, &opts)?;
        rep.params = params;
        Ok(rep)
    })
}

fn nlp_objective_for(
    kind: BoundKind,
    inst: &CovarianceInstance,
    s: usize,
    params: &MixParams,
    shrink: f64,
) -> Result<(NlpObjective, MixParams)> {
    // log gamma = log lo + shrink * (log requested - log lo)
    let pick = |p: NlpParams, psi: f64| {
        let (lo, hi) = p.gamma_interval();
        let g = psi.exp().clamp(lo, hi);
        p.with_gamma(lo * (g / lo).powf(shrink))
    };
    let p1 = || -> Result<NlpParams> { Ok(pick(nlp::nlp_trace_params(inst)?, params.psi1)) };
    let p2 = || -> Result<NlpParams> { Ok(pick(nlp::nlp_trace_params(&inst.complement().0)?, params.psi2)) };
    match kind {
        BoundKind::Nlp => {
            let p = p1()?;
            let used = MixParams { alpha: 0.0, psi1: p.gamma.ln(), psi2: params.psi2 };
            Ok((NlpObjective::direct(inst, s, &p)?, used))
        }
        BoundKind::Cnlp => {
            let p = p2()?;
            let used = MixParams { alpha: 1.0, psi1: params.psi1, psi2: p.gamma.ln() };
            Ok((NlpObjective::mixed(inst, s, 1.0, &p, &p)?, used))
        }
        BoundKind::Mnlp => {
            let a = params.alpha;
            // an absent term still needs well-formed parameters
            let (q1, q2) = match (a < 1.0, a > 0.0) {
                (true, true) => (p1()?, p2()?),
                (true, false) => {
                    let q = p1()?;
                    (q.clone(), q)
                }
                _ => {
                    let q = p2()?;
                    (q.clone(), q)
                }
            };
            let used = MixParams { alpha: a, psi1: q1.gamma.ln(), psi2: q2.gamma.ln() };
            Ok((NlpObjective::mixed(inst, s, a, &q1, &q2)?, used))
        }
        _ => Err(MespError::InvalidParam(format!("{kind} is not an NLP bound"))),
    }
}

/// Bound value at fixed parameters.
pub fn evaluate(
    kind: BoundKind,
    inst: &CovarianceInstance,
    s: usize,
    params: &MixParams,
    effort: &BoundEffort,
) -> Result<BoundReport> {
    params.validate()?;
    if s > inst.n() {
        return Err(MespError::InvalidParam(format!("s = {s} exceeds n = {}", inst.n())));
    }
    let tol = effort.tol;
    match kind {
        BoundKind::Linx => linx::solve_linx(inst, s, params.gamma1(), tol),
        BoundKind::Bqp => {
            let mut r = bqp::solve_bqp(inst, s, params.gamma1(), tol)?.report;
            r.params = MixParams { alpha: 0.0, ..*params };
            Ok(r)
        }
        BoundKind::Cbqp => {
            let p = MixParams { alpha: 1.0, ..*params };
            Ok(bqp::solve_mbqp(inst, s, &p, tol)?.report)
        }
        BoundKind::Mbqp => Ok(bqp::solve_mbqp(inst, s, params, tol)?.report),
        BoundKind::Nlp | BoundKind::Cnlp | BoundKind::Mnlp => {
            solve_nlp_family(|sh| nlp_objective_for(kind, inst, s, params, sh), s, tol)
        }
    }
}

/// Tunes the family's parameters from `init` (or a default start) and
/// returns the best report, whose `params` are the tuned parameters.
pub fn tune(
    kind: BoundKind,
    inst: &CovarianceInstance,
    s: usize,
    init: Option<&MixParams>,
    effort: &BoundEffort,
) -> Result<BoundReport> {
    let n = inst.n();
    let start = init.copied().unwrap_or_default();
    start.validate()?;
    let tol = effort.tol;
    match kind {
        BoundKind::Linx => {
            let t = linx::tune_linx_gamma(inst, s, start.psi1, effort.linx_g_tol)?;
            let mut r = t.report;
            r.trail = t.trail;
            Ok(r)
        }
        BoundKind::Bqp => {
            let (_, r) = tuner::tune_endpoint(inst, s, 1, start.psi1, effort.tune.psi_steps * 2, tol)?;
            Ok(r)
        }
        BoundKind::Cbqp => {
            let (_, r) = tuner::tune_endpoint(inst, s, 2, start.psi2, effort.tune.psi_steps * 2, tol)?;
            Ok(r)
        }
        BoundKind::Mbqp => {
            let init = match init {
                Some(p) => *p,
                None => tuner::endpoint_init(inst, s, &effort.tune)?,
            };
            let (_, r) = tuner::alternate_tune(inst, s, &init, &effort.tune)?;
            Ok(r)
        }
        BoundKind::Nlp => {
            let p = nlp::nlp_trace_params(inst)?;
            if s == 0 || s == n {
                return evaluate(kind, inst, s, &start, effort);
            }
            let (g, mut r) = nlp::gamma_grid_report(inst, s, &p, effort.gamma_grid, tol)?;
            r.params = MixParams { alpha: 0.0, psi1: g.ln(), psi2: 0.0 };
            Ok(r)
        }
        BoundKind::Cnlp => {
            let (comp, _) = inst.complement();
            let p = nlp::nlp_trace_params(&comp)?;
            if s == 0 || s == n {
                return evaluate(kind, inst, s, &start, effort);
            }
            let (g, _) = nlp::gamma_grid_report(&comp, n - s, &p, effort.gamma_grid, tol)?;
            evaluate(kind, inst, s, &MixParams { alpha: 1.0, psi1: 0.0, psi2: g.ln() }, effort)
        }
        BoundKind::Mnlp => {
            if s == 0 || s == n {
                return evaluate(kind, inst, s, &start, effort);
            }
            let p1 = nlp::nlp_trace_params(inst)?;
            let (comp, _) = inst.complement();
            let p2 = nlp::nlp_trace_params(&comp)?;
            let (g1, _) = nlp::gamma_grid_report(inst, s, &p1, effort.gamma_grid, tol)?;
            let (g2, _) = nlp::gamma_grid_report(&comp, n - s, &p2, effort.gamma_grid, tol)?;
            let (a, mut r) = nlp::alpha_grid_report(inst, s, &p1.with_gamma(g1), &p2.with_gamma(g2), tol)?;
            r.params = MixParams { alpha: a, psi1: g1.ln(), psi2: g2.ln() };
            Ok(r)
        }
    }
}

/// `max weight * f(x) - tilt'x` over the family's feasible set, with `x` in
/// selection space. The report's `value` is the primal value and
/// `upper_bound()` a valid over-estimate where the solver certifies one.
pub fn solve_tilted(
    kind: BoundKind,
    inst: &CovarianceInstance,
    s: usize,
    params: &MixParams,
    weight: f64,
    tilt: &[f64],
    tol: f64,
) -> Result<BoundReport> {
    let n = inst.n();
    if tilt.len() != n {
        return Err(MespError::DimensionMismatch { expected: n, found: tilt.len() });
    }
    if !(weight >= 0.0) {
        return Err(MespError::InvalidParam(format!("weight must be nonnegative, got {weight}")));
    }
    if !kind.tiltable() {
        return Err(MespError::InvalidParam(format!("{kind} does not accept a linear tilt")));
    }
    if weight == 0.0 {
        return Ok(linear_max(tilt, s, params));
    }
    match kind {
        BoundKind::Linx => {
            let cfg = LinxSolve {
                weight,
                tilt: Some(tilt),
                options: BarrierOptions { tol, ..BarrierOptions::default() },
                ..LinxSolve::default()
            };
            linx::solve_linx_with(inst, s, params.gamma1(), &cfg)
        }
        BoundKind::Bqp | BoundKind::Cbqp => {
            let direct = kind == BoundKind::Bqp;
            let prob = LiftedProblem {
                w1: if direct { weight } else { 0.0 },
                w2: if direct { 0.0 } else { weight },
                gamma1: params.gamma1(),
                gamma2: params.gamma2(),
                tilt: Some(tilt),
            };
            let mut r = bqp::solve_lifted(inst, s, &prob, &BqpOptions::with_tol(tol))?.report;
            r.params = *params;
            Ok(r)
        }
        _ => {
            let tilt_opts = NlpSolve { tilt: Some(tilt), tol, ..NlpSolve::default() };
            let nlp = with_nlp_fallback(|shrink| {
                let (obj, used) = nlp_objective_for(kind, inst, s, params, shrink)?;
                let mut r = nlp::solve_objective(&obj.scaled(weight), s, &tilt_opts)?;
                r.params = used;
                Ok(r)
            });
            match nlp {
                // No scaling certifies this tilt. Every family is exact at
                // subsets, so tilted linx bounds the same subset maximum.
                Err(MespError::ConcavityViolation | MespError::NotPositiveDefinite { .. }) => {
                    let psi = linx::tune_linx_gamma(inst, s, 0.0, 1e-6)?.psi;
                    let cfg = LinxSolve {
                        weight,
                        tilt: Some(tilt),
                        options: BarrierOptions { tol, ..BarrierOptions::default() },
                        ..LinxSolve::default()
                    };
                    let mut r = linx::solve_linx_with(inst, s, psi.exp(), &cfg)?;
                    r.params = *params;
                    r.flag(Flag::ConcavityViolation);
                    Ok(r)
                }
                other => other,
            }
        }
    }
}

/// `max -tilt'x` over `{0 <= x <= e, e'x = s}`: minus the sum of the `s`
/// smallest tilts (ties to the smallest index).
pub fn linear_max(tilt: &[f64], s: usize, params: &MixParams) -> BoundReport {
    let mut order: Vec<usize> = (0..tilt.len()).collect();
    order.sort_by(|&a, &b| tilt[a].total_cmp(&tilt[b]).then(a.cmp(&b)));
    let mut x = vec![0.0; tilt.len()];
    let mut value = 0.0;
    for &i in order.iter().take(s) {
        x[i] = 1.0;
        value -= tilt[i];
    }
    let mut r = BoundReport::new(value, x);
    r.dual_value = Some(value);
    r.params = *params;
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{brute_force_opt, gen_random_pd};
    use crate::linalg::SymMatrix;

    #[test]
    fn kind_names_round_trip() {
        for k in BoundKind::ALL {
            assert_eq!(k.name().parse::<BoundKind>().unwrap(), k);
        }
        assert!("foo".parse::<BoundKind>().is_err());
    }

    #[test]
    fn identity_bounds_vanish() {
        let id = CovarianceInstance::new(SymMatrix::identity(5), "").unwrap();
        let effort = BoundEffort { gamma_grid: 5, ..BoundEffort::default() };
        for k in BoundKind::ALL {
            let r = tune(k, &id, 2, None, &effort).unwrap();
            assert!(r.upper_bound().abs() < 1e-6, "{k}: {}", r.upper_bound());
        }
    }

    #[test]
    fn tuned_bounds_are_valid() {
        let inst = gen_random_pd(7, 44, 30.0).unwrap();
        let effort = BoundEffort { gamma_grid: 15, tune: TuneBudget { rounds: 1, ..TuneBudget::default() }, ..BoundEffort::default() };
        for s in [2, 4] {
            let (z, _) = brute_force_opt(&inst, s).unwrap();
            for k in BoundKind::ALL {
                let r = tune(k, &inst, s, None, &effort).unwrap();
                assert!(r.upper_bound() >= z - 1e-6, "{k} s={s}: {} < {z}", r.upper_bound());
                let again = evaluate(k, &inst, s, &r.params, &effort).unwrap();
                assert!((again.upper_bound() - r.upper_bound()).abs() < 1e-5, "{k}");
            }
        }
    }

    #[test]
    fn tilt_examples() {
        let inst = gen_random_pd(6, 8, 20.0).unwrap();
        let params = MixParams::default();
        let zero = vec![0.0; 6];
        let shift = vec![0.7; 6];
        for k in [BoundKind::Linx, BoundKind::Bqp, BoundKind::Cbqp, BoundKind::Nlp, BoundKind::Cnlp] {
            let a = solve_tilted(k, &inst, 2, &params, 1.0, &zero, 1e-8).unwrap();
            let b = solve_tilted(k, &inst, 2, &params, 1.0, &shift, 1e-8).unwrap();
            assert!((b.value - (a.value - 1.4)).abs() < 1e-6, "{k}: {} vs {}", b.value, a.value);
        }
        let tilt = [0.5, -1.0, 2.0, 0.0, -0.3, 1.0];
        let r = solve_tilted(BoundKind::Nlp, &inst, 3, &params, 0.0, &tilt, 1e-8).unwrap();
        assert!((r.value - 1.3).abs() < 1e-15);
        assert_eq!(r.optimizer_x, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    }
}
