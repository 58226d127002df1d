//! Exact MESP by best-first branch-and-bound.
//!
//! A node fixes some indices in and some out. Fixing `i` in conditions the
//! remaining covariance on `i` (Schur complement) and adds `log C_ii` to the
//! node's shift, so every node is again a MESP instance:
//! `z(node) = shift + z(reduced, residual_s)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::join;
use serde::{Deserialize, Serialize};

use crate::bound::{self, BoundEffort, BoundKind};
use crate::error::{MespError, Result};
use crate::instance::{self, CovarianceInstance, SubsetSelection};
use crate::linalg::SymMatrix;
use crate::report::{BoundReport, MixParams};
use crate::tuner::TuneBudget;

pub const PRUNE_TOL: f64 = 1e-8;
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Node {
    pub id: usize,
    pub depth: usize,
    /// Original indices fixed into the selection.
    pub fixed_in: Vec<usize>,
    pub fixed_out: Vec<usize>,
    /// Original index of each row of `reduced`.
    pub free: Vec<usize>,
    pub reduced: CovarianceInstance,
    pub shift: f64,
    pub residual_s: usize,
    pub inherited: MixParams,
    /// Depth at which `inherited` was last tuned.
    pub tuned_at: usize,
    pub bound: f64,
}

impl Node {
    pub fn root(inst: &CovarianceInstance, s: usize) -> Result<Node> {
        if s > inst.n() {
            return Err(MespError::InvalidParam(format!("s = {s} exceeds n = {}", inst.n())));
        }
        Ok(Node {
            id: 0,
            depth: 0,
            fixed_in: Vec::new(),
            fixed_out: Vec::new(),
            free: (0..inst.n()).collect(),
            reduced: inst.clone(),
            shift: 0.0,
            residual_s: s,
            inherited: MixParams::default(),
            tuned_at: 0,
            bound: f64::INFINITY,
        })
    }

    fn position(&self, i: usize) -> Result<usize> {
        self.free.iter().position(|&f| f == i).ok_or(MespError::IndexNotFree(i))
    }

    fn child(&self, free: Vec<usize>, reduced: CovarianceInstance) -> Node {
        Node {
            id: 0,
            depth: self.depth + 1,
            fixed_in: self.fixed_in.clone(),
            fixed_out: self.fixed_out.clone(),
            free,
            reduced,
            shift: self.shift,
            residual_s: self.residual_s,
            inherited: self.inherited,
            tuned_at: self.tuned_at,
            bound: self.bound,
        }
    }

    /// Deletes row and column of original index `i`.
    pub fn fix_out(&self, i: usize) -> Result<Node> {
        let p = self.position(i)?;
        if self.free.len() - 1 < self.residual_s {
            return Err(MespError::InvalidParam(format!("cannot fix {i} out: too few free indices remain")));
        }
        let keep: Vec<usize> = (0..self.free.len()).filter(|&k| k != p).collect();
        let reduced = CovarianceInstance::new(self.reduced.cov().principal(&keep), self.reduced.label.clone())?;
        let mut node = self.child(keep.iter().map(|&k| self.free[k]).collect(), reduced);
        node.fixed_out.push(i);
        node.fixed_out.sort_unstable();
        Ok(node)
    }

    /// Conditions on original index `i`: `shift += log C_ii`,
    /// `reduced = C_RR - C_Ri C_iR / C_ii`.
    pub fn fix_in(&self, i: usize) -> Result<Node> {
        let p = self.position(i)?;
        if self.residual_s == 0 {
            return Err(MespError::InvalidParam(format!("cannot fix {i} in: selection already full")));
        }
        let c = self.reduced.cov();
        let cii = c[(p, p)];
        if !(cii > 0.0) {
            return Err(MespError::NotPositiveDefinite { row: p, pivot: cii });
        }
        let keep: Vec<usize> = (0..self.free.len()).filter(|&k| k != p).collect();
        let schur = SymMatrix::from_fn(keep.len(), |a, b| {
            let (ka, kb) = (keep[a], keep[b]);
            c[(ka, kb)] - c[(ka, p)] * c[(p, kb)] / cii
        });
        let reduced = CovarianceInstance::new(schur, self.reduced.label.clone())?;
        let mut node = self.child(keep.iter().map(|&k| self.free[k]).collect(), reduced);
        node.shift += cii.ln();
        node.residual_s -= 1;
        node.fixed_in.push(i);
        node.fixed_in.sort_unstable();
        Ok(node)
    }

    /// Entropy in the original instance of `fixed_in` plus the reduced
    /// positions `t`.
    pub fn lifted_subset(&self, t: &[usize]) -> Vec<usize> {
        let mut all: Vec<usize> = self.fixed_in.iter().copied().chain(t.iter().map(|&k| self.free[k])).collect();
        all.sort_unstable();
        all
    }

    /// Original index to branch on, from a relaxation optimizer in reduced
    /// coordinates.
    pub fn branch_select(&self, report: &BoundReport) -> Result<usize> {
        Ok(self.free[branch_select(&report.optimizer_x)?])
    }
}

/// Position whose entry is closest to 1/2 (ties to the smallest position);
/// `NoFreeIndex` when every entry is within the integrality tolerance of 0 or 1.
pub fn branch_select(x: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in x.iter().enumerate() {
        let frac = v.min(1.0 - v);
        if frac <= INTEGRALITY_TOL {
            continue;
        }
        let dist = (v - 0.5).abs();
        if best.map_or(true, |(_, d)| dist < d) {
            best = Some((i, dist));
        }
    }
    best.map(|(i, _)| i).ok_or(MespError::NoFreeIndex)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbOptions {
    /// Children re-tune parameters when this many levels below the last
    /// tuning; otherwise they evaluate with the inherited parameters.
    pub retune_depth: usize,
    pub effort: BoundEffort,
    pub max_nodes: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            retune_depth: 3,
            effort: BoundEffort {
                gamma_grid: 25,
                tune: TuneBudget { rounds: 1, alpha_steps: 3, psi_steps: 3, mu_end: 1e-3, max_solves: 30, ..TuneBudget::default() },
                ..BoundEffort::default()
            },
            max_nodes: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BnbStats {
    pub nodes: usize,
    pub bound_calls: usize,
    pub retunes: usize,
    pub incumbent_updates: usize,
    pub pruned: usize,
    pub max_depth: usize,
    pub root_bound: f64,
    pub final_gap: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MespSolution {
    pub z: f64,
    pub selection: SubsetSelection,
    pub stats: BnbStats,
}

struct Queued(Node, BoundReport);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // larger bound first, then older node
        self.0.bound.total_cmp(&other.0.bound).then(other.0.id.cmp(&self.0.id))
    }
}

enum Evaluated {
    /// Completely determined node: `(value, subset)`.
    Leaf(f64, Vec<usize>),
    Open(Node, BoundReport, bool),
}

fn evaluate_node(mut node: Node, kind: BoundKind, opts: &BnbOptions, force_tune: bool) -> Result<Evaluated> {
    let r = node.residual_s;
    let m = node.free.len();
    if r == 0 {
        return Ok(Evaluated::Leaf(node.shift, node.lifted_subset(&[])));
    }
    if r == m {
        let all: Vec<usize> = (0..m).collect();
        return Ok(Evaluated::Leaf(node.shift + node.reduced.ldet_c(), node.lifted_subset(&all)));
    }
    let retune = force_tune || node.depth - node.tuned_at >= opts.retune_depth;
    let report = if retune {
        bound::tune(kind, &node.reduced, r, Some(&node.inherited), &opts.effort)?
    } else {
        bound::evaluate(kind, &node.reduced, r, &node.inherited, &opts.effort)?
    };
    if retune {
        node.tuned_at = node.depth;
    }
    node.inherited = report.params;
    // the parent bound also covers this node
    node.bound = (node.shift + report.upper_bound()).min(node.bound);
    Ok(Evaluated::Open(node, report, retune))
}

/// Top-`r` rounding of a relaxation optimizer, as reduced positions.
fn round_top(x: &[f64], r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut t: Vec<usize> = order.into_iter().take(r).collect();
    t.sort_unstable();
    t
}

struct Search<'a> {
    inst: &'a CovarianceInstance,
    best_z: f64,
    best_set: Vec<usize>,
    stats: BnbStats,
    heap: BinaryHeap<Queued>,
    next_id: usize,
}

impl Search<'_> {
    fn offer(&mut self, z: f64, set: Vec<usize>) {
        if z > self.best_z + PRUNE_TOL {
            self.best_z = z;
            self.best_set = set;
            self.stats.incumbent_updates += 1;
        }
    }

    /// Records a freshly evaluated node: leaves update the incumbent, open
    /// nodes contribute a rounded incumbent and are queued unless pruned.
    fn absorb(&mut self, ev: Evaluated) -> Result<()> {
        match ev {
            Evaluated::Leaf(z, set) => self.offer(z, set),
            Evaluated::Open(mut node, report, retuned) => {
                self.stats.bound_calls += 1;
                if retuned {
                    self.stats.retunes += 1;
                }
                let set = node.lifted_subset(&round_top(&report.optimizer_x, node.residual_s));
                let z = self.inst.entropy(&set)?;
                self.offer(z, set);
                if node.bound <= self.best_z + PRUNE_TOL {
                    self.stats.pruned += 1;
                    return Ok(());
                }
                node.id = self.next_id;
                self.next_id += 1;
                self.heap.push(Queued(node, report));
            }
        }
        Ok(())
    }

    fn failure(&self, global_bound: f64, cause: impl std::fmt::Display) -> MespError {
        MespError::BoundFailure(format!("{cause}; incumbent {}, global bound {global_bound}", self.best_z))
    }
}

/// Exact optimum of `max ldet C[S,S]` over `|S| = s`.
pub fn solve_mesp(inst: &CovarianceInstance, s: usize, kind: BoundKind, opts: &BnbOptions) -> Result<MespSolution> {
    let started = Instant::now();
    let n = inst.n();
    if s == 0 || s > n {
        return Err(MespError::InvalidParam(format!("need 1 <= s <= n, got s = {s}, n = {n}")));
    }
    let (best_z, greedy) = instance::greedy_heuristic(inst, s)?;
    let mut search =
        Search { inst, best_z, best_set: greedy.indices, stats: BnbStats::default(), heap: BinaryHeap::new(), next_id: 0 };

    let root = evaluate_node(Node::root(inst, s)?, kind, opts, true)?;
    search.stats.root_bound = match &root {
        Evaluated::Leaf(z, _) => *z,
        Evaluated::Open(node, _, _) => node.bound,
    };
    search.absorb(root)?;

    let mut global_bound;
    while let Some(Queued(node, report)) = search.heap.pop() {
        if node.bound <= search.best_z + PRUNE_TOL {
            // every queued bound is no larger
            search.stats.pruned += 1 + search.heap.len();
            search.heap.clear();
            break;
        }
        global_bound = node.bound;
        if search.stats.nodes >= opts.max_nodes {
            return Err(search.failure(global_bound, format!("node limit {} reached", opts.max_nodes)));
        }
        search.stats.nodes += 1;
        search.stats.max_depth = search.stats.max_depth.max(node.depth);
        let i = match node.branch_select(&report) {
            Ok(i) => i,
            Err(MespError::NoFreeIndex) => {
                // the relaxation optimizer is a subset; it attains the node
                // bound up to solver tolerance
                let t: Vec<usize> = (0..node.free.len()).filter(|&k| report.optimizer_x[k] > 0.5).collect();
                if t.len() == node.residual_s {
                    let set = node.lifted_subset(&t);
                    let z = inst.entropy(&set)?;
                    search.offer(z, set);
                    if node.bound <= search.best_z + INTEGRALITY_TOL {
                        search.stats.pruned += 1;
                        continue;
                    }
                }
                node.free[closest_to_half(&report.optimizer_x)]
            }
            Err(e) => return Err(e),
        };
        let (a, b) = (node.fix_in(i)?, node.fix_out(i)?);
        let (ea, eb) = join(|| evaluate_node(a, kind, opts, false), || evaluate_node(b, kind, opts, false));
        for ev in [ea, eb] {
            let ev = ev.map_err(|e| search.failure(global_bound, e))?;
            search.absorb(ev)?;
        }
    }
    let mut stats = search.stats;
    // the search only ends once no open node can beat the incumbent
    stats.final_gap = 0.0;
    stats.wall_time = started.elapsed();
    let selection = inst.selection(&search.best_set)?;
    Ok(MespSolution { z: selection.entropy, selection, stats })
}

fn closest_to_half(x: &[f64]) -> usize {
    (0..x.len()).min_by(|&a, &b| (x[a] - 0.5).abs().total_cmp(&(x[b] - 0.5).abs()).then(a.cmp(&b))).unwrap_or(0)
}
