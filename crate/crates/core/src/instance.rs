//! Problem instances: validated covariance matrices, subsets and their
//! entropies, the complementation map, an exhaustive oracle, a greedy
//! heuristic, synthetic generators and the matrix text format.
//!
//! Indices are 0-based throughout the library. The command-line front end
//! prints 1-based subsets.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MespError, Result};
use crate::linalg::{self, Cholesky, Matrix, SymMatrix};

/// Largest order the exhaustive oracle accepts.
pub const ORACLE_MAX_N: usize = 24;

/// A positive-definite covariance matrix with its inverse and log-determinant
/// cached.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceInstance {
    c: SymMatrix,
    cinv: SymMatrix,
    ldet_c: f64,
    pub label: String,
}

impl CovarianceInstance {
    pub fn new(c: SymMatrix, label: impl Into<String>) -> Result<Self> {
        if c.n() == 0 {
            return Err(MespError::InvalidParam("covariance matrix must have order >= 1".into()));
        }
        let ch = Cholesky::factor(&c)?;
        let cinv = ch.inverse();
        let ldet_c = ch.ldet();
        let prod = c.matmul(&cinv)?;
        let resid = (0..c.n())
            .flat_map(|i| (0..c.n()).map(move |j| (i, j)))
            .map(|(i, j)| (prod[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0_f64, f64::max);
        if resid > 1e-8 {
            return Err(MespError::InvalidParam(format!(
                "covariance matrix too ill-conditioned: |C C^-1 - I| = {resid:e}"
            )));
        }
        Ok(CovarianceInstance { c, cinv, ldet_c, label: label.into() })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        CovarianceInstance::new(SymMatrix::from_rows(rows)?, "")
    }

    pub fn n(&self) -> usize {
        self.c.n()
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.c
    }

    pub fn cov_inv(&self) -> &SymMatrix {
        &self.cinv
    }

    pub fn ldet_c(&self) -> f64 {
        self.ldet_c
    }

    /// The instance over `C^{-1}` together with the shift `ldet C`: any upper
    /// bound `b` on `z(C^{-1}, n - s)` gives the upper bound `shift + b` on
    /// `z(C, s)`.
    pub fn complement(&self) -> (CovarianceInstance, f64) {
        let label = if self.label.is_empty() { String::new() } else { format!("{}^-1", self.label) };
        let inst = CovarianceInstance {
            c: self.cinv.clone(),
            cinv: self.c.clone(),
            ldet_c: -self.ldet_c,
            label,
        };
        (inst, self.ldet_c)
    }

    /// `ldet C[S,S]`.
    pub fn entropy(&self, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Err(MespError::EmptySubset);
        }
        self.entropy_or_zero(subset)
    }

    /// Like [`entropy`](Self::entropy) but defines the empty set to have
    /// entropy 0.
    pub fn entropy_or_zero(&self, subset: &[usize]) -> Result<f64> {
        let n = self.n();
        if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
            return Err(MespError::IndexOutOfRange { index: bad, n });
        }
        if subset.is_empty() {
            return Ok(0.0);
        }
        linalg::ldet(&self.c.principal(subset))
    }

    pub fn selection(&self, subset: &[usize]) -> Result<SubsetSelection> {
        let mut indices = subset.to_vec();
        indices.sort_unstable();
        indices.dedup();
        let entropy = self.entropy(&indices)?;
        Ok(SubsetSelection { s: indices.len(), indices, entropy })
    }

    /// Writes the matrix text format with 17 significant digits.
    pub fn to_text(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        if !self.label.is_empty() {
            let _ = writeln!(out, "# {}", self.label);
        }
        let _ = writeln!(out, "{n}");
        for i in 0..n {
            let row: Vec<String> = self.c.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, first) = lines.next().ok_or(MespError::Parse { line: 0, msg: "empty file".into() })?;
        let n: usize = first
            .parse()
            .map_err(|_| MespError::Parse { line: ln, msg: format!("expected order, found '{first}'") })?;
        if n == 0 {
            return Err(MespError::Parse { line: ln, msg: "order must be positive".into() });
        }
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines
                .next()
                .ok_or(MespError::Parse { line: ln, msg: format!("expected {n} matrix rows") })?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| MespError::Parse { line: ln, msg: e.to_string() })?;
            if row.len() != n {
                return Err(MespError::Parse { line: ln, msg: format!("row has {} entries, expected {n}", row.len()) });
            }
            rows.push(row);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(MespError::Parse { line: ln, msg: "trailing data after matrix".into() });
        }
        let c = SymMatrix::from_rows(&rows)?;
        CovarianceInstance::new(c, "")
    }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<CovarianceInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut inst = CovarianceInstance::parse(&text)?;
    inst.label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(inst)
}

pub fn write_instance(inst: &CovarianceInstance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, inst.to_text())?;
    Ok(())
}

pub fn complement(inst: &CovarianceInstance) -> (CovarianceInstance, f64) {
    inst.complement()
}

pub fn entropy(inst: &CovarianceInstance, subset: &[usize]) -> Result<f64> {
    inst.entropy(subset)
}

/// A feasible subset and its entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub indices: Vec<usize>,
    pub s: usize,
    pub entropy: f64,
}

impl SubsetSelection {
    /// Indicator vector of length `n`.
    pub fn indicator(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for &i in &self.indices {
            x[i] = 1.0;
        }
        x
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }
}

/// Depth-first enumeration with an incrementally grown Cholesky factor. Only
/// strictly better subsets replace the incumbent, so the lexicographically
/// smallest optimum is kept.
struct Enumerator<'a> {
    c: &'a SymMatrix,
    n: usize,
    s: usize,
    // rows of the factor of C[S,S], packed by depth
    l: Vec<Vec<f64>>,
    stack: Vec<usize>,
    best: f64,
    best_set: Vec<usize>,
}

impl Enumerator<'_> {
    fn descend(&mut self, start: usize, value: f64) {
        let depth = self.stack.len();
        if depth == self.s {
            if value > self.best {
                self.best = value;
                self.best_set.clone_from(&self.stack);
            }
            return;
        }
        let remaining = self.s - depth;
        for j in start..=self.n - remaining {
            let mut y = Vec::with_capacity(depth);
            for k in 0..depth {
                let lk = &self.l[k];
                let acc = self.c[(self.stack[k], j)] - linalg::dot(&lk[..k], &y[..k]);
                y.push(acc / lk[k]);
            }
            let d = self.c[(j, j)] - linalg::dot(&y, &y);
            if d <= 0.0 {
                continue;
            }
            y.push(d.sqrt());
            self.l.push(y);
            self.stack.push(j);
            self.descend(j + 1, value + d.ln());
            self.stack.pop();
            self.l.pop();
        }
    }
}

/// Exact `z(C, s)` by enumerating all `s`-subsets.
pub fn brute_force_opt(inst: &CovarianceInstance, s: usize) -> Result<(f64, SubsetSelection)> {
    let n = inst.n();
    if n > ORACLE_MAX_N {
        return Err(MespError::TooLargeForOracle { n, cap: ORACLE_MAX_N });
    }
    if s == 0 || s > n {
        return Err(MespError::InvalidParam(format!("need 1 <= s <= n, got s = {s}, n = {n}")));
    }
    let c = inst.cov();
    let results: Vec<(f64, Vec<usize>)> = (0..=n - s)
        .into_par_iter()
        .map(|first| {
            let d = c[(first, first)];
            let mut e = Enumerator {
                c,
                n,
                s,
                l: vec![vec![d.sqrt()]],
                stack: vec![first],
                best: f64::NEG_INFINITY,
                best_set: Vec::new(),
            };
            e.descend(first + 1, d.ln());
            (e.best, e.best_set)
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut best_set = Vec::new();
    for (v, set) in results {
        if v > best {
            best = v;
            best_set = set;
        }
    }
    let sel = inst.selection(&best_set)?;
    Ok((sel.entropy, sel))
}

/// Greedy augmentation followed by 1-swap local search.
pub fn greedy_heuristic(inst: &CovarianceInstance, s: usize) -> Result<(f64, SubsetSelection)> {
    let n = inst.n();
    if s == 0 || s > n {
        return Err(MespError::InvalidParam(format!("need 1 <= s <= n, got s = {s}, n = {n}")));
    }
    let c = inst.cov();
    // conditional variances under the current selection
    let mut resid = c.diag();
    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    let mut in_set = vec![false; n];
    let mut factors: Vec<Vec<f64>> = Vec::new(); // columns of L for selected pivots
    for _ in 0..s {
        let mut pick = None;
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            if !in_set[j] && resid[j] > best {
                best = resid[j];
                pick = Some(j);
            }
        }
        let j = pick.expect("s <= n");
        let piv = resid[j].sqrt();
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let prev: f64 = factors.iter().map(|f| f[i] * f[j]).sum();
                (c[(i, j)] - prev) / piv
            })
            .collect();
        for i in 0..n {
            resid[i] -= col[i] * col[i];
        }
        factors.push(col);
        in_set[j] = true;
        chosen.push(j);
    }
    chosen.sort_unstable();
    let mut current = inst.entropy(&chosen)?;
    loop {
        let mut improved = false;
        'scan: for a in 0..chosen.len() {
            for b in 0..n {
                if in_set[b] {
                    continue;
                }
                let mut cand = chosen.clone();
                cand[a] = b;
                cand.sort_unstable();
                let Ok(v) = inst.entropy(&cand) else { continue };
                if v > current + 1e-12 * current.abs().max(1.0) {
                    in_set[chosen[a]] = false;
                    in_set[b] = true;
                    chosen = cand;
                    current = v;
                    improved = true;
                    break 'scan;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let sel = inst.selection(&chosen)?;
    Ok((sel.entropy, sel))
}

/// Deterministic random positive-definite matrix `Q Λ Q'` with a log-uniform
/// spectrum whose extreme eigenvalues are exactly `1` and `cond_target`.
pub fn gen_random_pd(n: usize, seed: u64, cond_target: f64) -> Result<CovarianceInstance> {
    if n == 0 {
        return Err(MespError::InvalidParam("n must be >= 1".into()));
    }
    if !(cond_target >= 1.0) || !cond_target.is_finite() {
        return Err(MespError::InvalidParam(format!("cond_target must be >= 1, got {cond_target}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_cond = cond_target.ln();
    let mut exps: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    if n >= 2 {
        exps[0] = 0.0;
        exps[1] = 1.0;
    } else {
        exps[0] = 0.0;
    }
    let lambda: Vec<f64> = exps.iter().map(|t| (t * log_cond).exp()).collect();
    let g = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = linalg::orthonormalize_columns(&g);
    let c = SymMatrix::from_fn(n, |i, j| (0..n).map(|k| q[(i, k)] * lambda[k] * q[(j, k)]).sum());
    CovarianceInstance::new(c, format!("rand-n{n}-seed{seed}-cond{cond_target}"))
}
