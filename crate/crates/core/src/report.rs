use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{MespError, Result};

/// Mixing weight and log-scaling parameters (`gamma_i = exp(psi_i)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub alpha: f64,
    pub psi1: f64,
    pub psi2: f64,
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams { alpha: 0.0, psi1: 0.0, psi2: 0.0 }
    }
}

impl MixParams {
    pub fn new(alpha: f64, psi1: f64, psi2: f64) -> Result<Self> {
        let p = MixParams { alpha, psi1, psi2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(MespError::InvalidParam(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !self.psi1.is_finite() || !self.psi2.is_finite() {
            return Err(MespError::InvalidParam("psi parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn gamma1(&self) -> f64 {
        self.psi1.exp()
    }

    pub fn gamma2(&self) -> f64 {
        self.psi2.exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    MaxIterations,
    SingularCurvature,
    BudgetExhausted,
    NonMonotoneStep,
    ConcavityViolation,
    SkippedParameter,
}

/// One row of a parameter trail recorded while tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub k: usize,
    pub alpha: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub value: f64,
    pub residual: f64,
    pub g_norm: f64,
}

/// Result of a single bound evaluation.
///
/// `wall_time` is deliberately not serialized so that reports are
/// reproducible byte-for-byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub optimizer_x: Vec<f64>,
    pub params: MixParams,
    pub iterations: usize,
    pub kkt_residual: f64,
    #[serde(skip)]
    pub wall_time: Duration,
    pub flags: Vec<Flag>,
    /// Certified over-estimate of the relaxation optimum, when available.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dual_value: Option<f64>,
    /// Per-term values `(f1, f2)` for mixed bounds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub terms: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trail: Vec<TrailEntry>,
}

impl BoundReport {
    pub fn new(value: f64, optimizer_x: Vec<f64>) -> Self {
        BoundReport {
            value,
            optimizer_x,
            params: MixParams::default(),
            iterations: 0,
            kkt_residual: 0.0,
            wall_time: Duration::ZERO,
            flags: Vec::new(),
            dual_value: None,
            terms: None,
            trail: Vec::new(),
        }
    }

    pub fn flag(&mut self, f: Flag) {
        if !self.flags.contains(&f) {
            self.flags.push(f);
            self.flags.sort();
        }
    }

    pub fn has_flag(&self, f: Flag) -> bool {
        self.flags.contains(&f)
    }

    /// The value to use as an upper bound: the dual certificate when one
    /// exists, the primal value otherwise.
    pub fn upper_bound(&self) -> f64 {
        self.dual_value.unwrap_or(self.value)
    }
}
