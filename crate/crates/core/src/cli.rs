//! Command-line front end. Every command writes one JSON document (or the
//! curve CSV) to `--out` or standard output; logs go to standard error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bnb::{self, BnbOptions};
use crate::bound::{self, BoundEffort, BoundKind};
use crate::error::{MespError, Result};
use crate::instance::{self, CovarianceInstance};
use crate::mixer::{self, MixComponent};
use crate::report::MixParams;

pub const SCHEMA_VERSION: u32 = 1;
/// Largest order for which the curve's lower bound is the exact optimum.
pub const CURVE_ORACLE_MAX_N: usize = 24;
pub const CURVE_HEADER: &str = "s,bound,value,lower_bound,gap";

#[derive(Parser, Debug)]
#[command(name = "mesp", version, about = "Upper bounds and exact solutions for maximum-entropy sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a seeded random covariance instance.
    Gen(GenArgs),
    /// Evaluate one bound at fixed parameters.
    Bound(BoundArgs),
    /// Tune the parameters of linx or mbqp.
    Tune(TuneArgs),
    /// Lagrangian mixing of two bounds.
    Mix(MixArgs),
    /// Exact solve by branch-and-bound.
    Solve(SolveArgs),
    /// Exact solve by enumeration.
    Oracle(OracleArgs),
    /// Gap-versus-s sweep as CSV.
    Curve(CurveArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Target condition number.
    #[arg(long, default_value_t = 100.0)]
    pub cond: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub s: usize,
    #[arg(long)]
    pub kind: BoundKind,
    /// Scaling parameter; sets both psi parameters to its logarithm.
    #[arg(long, conflicts_with = "psi")]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub psi: Option<f64>,
    /// Mixing weight, used by mbqp and mnlp.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub s: usize,
    #[arg(long)]
    pub kind: BoundKind,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub psi1: Option<f64>,
    #[arg(long)]
    pub psi2: Option<f64>,
    /// Cap on relaxation solves.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct MixArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub s: usize,
    #[arg(long)]
    pub a: BoundKind,
    #[arg(long)]
    pub b: BoundKind,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = mixer::DEFAULT_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub s: usize,
    #[arg(long, default_value = "linx")]
    pub bound: BoundKind,
    #[arg(long, default_value_t = 3)]
    pub retune_depth: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub s: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Curve flags; any field may instead come from a TOML run file, with flags
/// taking precedence.
#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct CurveArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub s_from: Option<usize>,
    #[arg(long)]
    pub s_to: Option<usize>,
    /// Comma-separated bound kinds.
    #[arg(long, value_delimiter = ',')]
    pub bounds: Option<Vec<BoundKind>>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub gamma_grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub run_file: Option<PathBuf>,
}

impl CurveArgs {
    /// Fills fields missing from the flags with those of the run file.
    pub fn resolve(&self) -> Result<CurveArgs> {
        let Some(path) = &self.run_file else { return Ok(self.clone()) };
        let text = fs::read_to_string(path).map_err(|e| MespError::Io(format!("{}: {e}", path.display())))?;
        let file: CurveArgs =
            toml::from_str(&text).map_err(|e| MespError::InvalidParam(format!("run file {}: {e}", path.display())))?;
        Ok(CurveArgs {
            matrix: self.matrix.clone().or(file.matrix),
            s_from: self.s_from.or(file.s_from),
            s_to: self.s_to.or(file.s_to),
            bounds: self.bounds.clone().or(file.bounds),
            tol: self.tol.or(file.tol),
            gamma_grid: self.gamma_grid.or(file.gamma_grid),
            out: self.out.clone().or(file.out),
            run_file: None,
        })
    }
}

/// Exit status for a failed command: 2 for bad input, 3 for numerical failure.
pub fn exit_code(e: &MespError) -> i32 {
    match e {
        MespError::Parse { .. }
        | MespError::Io(_)
        | MespError::InvalidParam(_)
        | MespError::DimensionMismatch { .. }
        | MespError::AsymmetricBeyondTol { .. }
        | MespError::EmptySubset
        | MespError::IndexOutOfRange { .. }
        | MespError::TooLargeForOracle { .. } => 2,
        _ => 3,
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(MespError::InvalidParam(format!("tolerance must be positive, got {tol}")))
    }
}

fn load(path: &Path) -> Result<CovarianceInstance> {
    let inst = instance::load_instance(path)?;
    info!("loaded {} (n = {})", path.display(), inst.n());
    Ok(inst)
}

fn envelope(command: &Command, result: serde_json::Value) -> Result<String> {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": command,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| MespError::Io(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn to_value(v: impl Serialize) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| MespError::Io(e.to_string()))
}

/// Runs a command and returns the text it emits with its destination.
pub fn execute(command: &Command) -> Result<(String, Option<PathBuf>)> {
    match command {
        Command::Gen(a) => {
            let inst = instance::gen_random_pd(a.n, a.seed, a.cond)?;
            Ok((inst.to_text(), a.out.clone()))
        }
        Command::Bound(a) => {
            check_tol(a.tol)?;
            let inst = load(&a.matrix)?;
            let psi = a.psi.or(a.gamma.map(f64::ln)).unwrap_or(0.0);
            let alpha = match a.kind {
                BoundKind::Mbqp | BoundKind::Mnlp => a.alpha,
                BoundKind::Cbqp | BoundKind::Cnlp => 1.0,
                _ => 0.0,
            };
            let params = MixParams::new(alpha, psi, psi)?;
            let effort = BoundEffort { tol: a.tol, ..BoundEffort::default() };
            let r = bound::evaluate(a.kind, &inst, a.s, &params, &effort)?;
            let result = json!({ "upper_bound": r.upper_bound(), "report": to_value(&r)? });
            Ok((envelope(command, result)?, a.out.clone()))
        }
        Command::Tune(a) => {
            check_tol(a.tol)?;
            if !matches!(a.kind, BoundKind::Linx | BoundKind::Mbqp) {
                return Err(MespError::InvalidParam(format!("tune supports linx and mbqp, not {}", a.kind)));
            }
            let inst = load(&a.matrix)?;
            let mut effort = BoundEffort { tol: a.tol, ..BoundEffort::default() };
            if let Some(b) = a.budget {
                effort.tune.max_solves = b;
            }
            let init = match (a.alpha0, a.psi1, a.psi2) {
                (None, None, None) => None,
                (al, p1, p2) => Some(MixParams::new(al.unwrap_or(0.5), p1.unwrap_or(0.0), p2.unwrap_or(0.0))?),
            };
            let r = bound::tune(a.kind, &inst, a.s, init.as_ref(), &effort)?;
            let result = json!({ "upper_bound": r.upper_bound(), "params": r.params, "report": to_value(&r)? });
            Ok((envelope(command, result)?, a.out.clone()))
        }
        Command::Mix(a) => {
            check_tol(a.tol)?;
            let inst = load(&a.matrix)?;
            let effort = BoundEffort { tol: a.tol, ..BoundEffort::default() };
            let ca = MixComponent::tuned(a.a, &inst, a.s, &effort)?;
            let cb = MixComponent::tuned(a.b, &inst, a.s, &effort)?;
            let r = mixer::subgradient_optimize(&inst, a.s, a.alpha, &ca, &cb, a.iters, a.tol)?;
            let result = json!({
                "upper_bound": r.report.value,
                "components": [ca, cb],
                "value_at_zero": r.value_at_zero,
                "best_pi": r.best_pi,
                "report": to_value(&r.report)?,
                "trace": to_value(&r.trace)?,
            });
            Ok((envelope(command, result)?, a.out.clone()))
        }
        Command::Solve(a) => {
            let inst = load(&a.matrix)?;
            let opts = BnbOptions { retune_depth: a.retune_depth, ..BnbOptions::default() };
            let sol = bnb::solve_mesp(&inst, a.s, a.bound, &opts)?;
            info!("solved in {:?} with {} nodes", sol.stats.wall_time, sol.stats.nodes);
            let result = json!({ "z": sol.z, "S": sol.selection.one_based(), "stats": to_value(&sol.stats)? });
            Ok((envelope(command, result)?, a.out.clone()))
        }
        Command::Oracle(a) => {
            let inst = load(&a.matrix)?;
            let (z, sel) = instance::brute_force_opt(&inst, a.s)?;
            let result = json!({ "z": z, "S": sel.one_based() });
            Ok((envelope(command, result)?, a.out.clone()))
        }
        Command::Curve(a) => {
            let cfg = a.resolve()?;
            let text = run_curve(&cfg)?;
            Ok((text, cfg.out))
        }
    }
}

/// One curve row; `value` is NaN when the bound failed at that `s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub s: usize,
    pub bound: BoundKind,
    pub value: f64,
    pub lower_bound: f64,
    pub gap: f64,
}

/// Tuned bound values against a lower bound for every `(s, bound)` pair.
pub fn curve_rows(inst: &CovarianceInstance, s_from: usize, s_to: usize, kinds: &[BoundKind], effort: &BoundEffort) -> Result<Vec<CurveRow>> {
    let n = inst.n();
    if s_from == 0 || s_from > s_to || s_to > n {
        return Err(MespError::InvalidParam(format!("need 1 <= s-from <= s-to <= n = {n}")));
    }
    if kinds.is_empty() {
        return Err(MespError::InvalidParam("no bounds requested".into()));
    }
    let lower: Vec<(usize, f64)> = (s_from..=s_to)
        .into_par_iter()
        .map(|s| {
            let z = if n <= CURVE_ORACLE_MAX_N {
                instance::brute_force_opt(inst, s)?.0
            } else {
                instance::greedy_heuristic(inst, s)?.0
            };
            Ok((s, z))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, BoundKind)> =
        (s_from..=s_to).flat_map(|s| kinds.iter().map(move |&k| (s, k))).collect();
    let mut rows: Vec<CurveRow> = jobs
        .into_par_iter()
        .map(|(s, kind)| {
            let lb = lower[s - s_from].1;
            let value = match bound::tune(kind, inst, s, None, effort) {
                Ok(r) => r.upper_bound(),
                Err(e) => {
                    warn!("{kind} failed at s = {s}: {e}");
                    f64::NAN
                }
            };
            CurveRow { s, bound: kind, value, lower_bound: lb, gap: value - lb }
        })
        .collect();
    rows.sort_by(|a, b| a.s.cmp(&b.s).then(a.bound.cmp(&b.bound)));
    Ok(rows)
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.s, r.bound, r.value, r.lower_bound, r.gap);
    }
    out
}

pub fn run_curve(cfg: &CurveArgs) -> Result<String> {
    let missing = |f: &str| MespError::InvalidParam(format!("curve needs --{f} (flag or run file)"));
    let matrix = cfg.matrix.as_ref().ok_or_else(|| missing("matrix"))?;
    let s_from = cfg.s_from.ok_or_else(|| missing("s-from"))?;
    let s_to = cfg.s_to.ok_or_else(|| missing("s-to"))?;
    let kinds = cfg.bounds.as_ref().ok_or_else(|| missing("bounds"))?;
    let mut effort = BoundEffort::default();
    if let Some(t) = cfg.tol {
        check_tol(t)?;
        effort.tol = t;
    }
    if let Some(g) = cfg.gamma_grid {
        effort.gamma_grid = g;
    }
    let inst = load(matrix)?;
    Ok(curve_csv(&curve_rows(&inst, s_from, s_to, kinds, &effort)?))
}

/// Executes the command and writes its output.
pub fn run(cli: &Cli) -> Result<()> {
    let (text, out) = execute(&cli.command)?;
    match out {
        Some(path) => fs::write(&path, text).map_err(|e| MespError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;

    fn write_diag(dir: &Path) -> PathBuf {
        let inst =
            CovarianceInstance::new(SymMatrix::from_fn(3, |i, j| if i == j { [1.0, 2.0, 4.0][i] } else { 0.0 }), "")
                .unwrap();
        let p = dir.join("diag.txt");
        instance::write_instance(&inst, &p).unwrap();
        p
    }

    fn result(cmd: Command) -> serde_json::Value {
        let (text, _) = execute(&cmd).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        v["result"].clone()
    }

    #[test]
    fn oracle_on_diagonal() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_diag(dir.path());
        let r = result(Command::Oracle(OracleArgs { matrix: m, s: 2, out: None }));
        assert!((r["z"].as_f64().unwrap() - 8f64.ln()).abs() < 1e-12);
        assert_eq!(r["S"], json!([2, 3]));
    }

    #[test]
    fn linx_on_identity_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("id.txt");
        instance::write_instance(&CovarianceInstance::new(SymMatrix::identity(4), "").unwrap(), &m).unwrap();
        let args = BoundArgs { matrix: m, s: 2, kind: BoundKind::Linx, gamma: None, psi: None, alpha: 0.5, tol: 1e-8, out: None };
        let r = result(Command::Bound(args));
        assert!(r["upper_bound"].as_f64().unwrap().abs() < 1e-6);
    }

    #[test]
    fn run_file_fills_missing_flags() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_diag(dir.path());
        let rf = dir.path().join("run.toml");
        fs::write(&rf, format!("matrix = {:?}\ns_from = 1\ns_to = 2\nbounds = [\"linx\", \"nlp\"]\n", m)).unwrap();
        let flags = CurveArgs { s_to: Some(1), run_file: Some(rf), ..CurveArgs::default() };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.s_to, Some(1));
        assert_eq!(cfg.s_from, Some(1));
        assert_eq!(cfg.bounds, Some(vec![BoundKind::Linx, BoundKind::Nlp]));
        let csv = run_curve(&cfg).unwrap();
        assert!(csv.starts_with(CURVE_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&MespError::InvalidParam("x".into())), 2);
        assert_eq!(exit_code(&MespError::ConcavityViolation), 3);
    }
}
