//! Branch-and-bound over input boxes or ReLU activation patterns, with
//! relaxed and complete clipping applied to every child.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clipping::{
    coordinate_ascent, relaxed_clip_parallel, relaxed_clip_sequential, ClipOrder,
};
use crate::crown::{
    classify_neurons, compute_bounds_with, AlphaPolicy, BoundResult, LayerBounds, Polarity,
    SplitAssignment, StabilityKind,
};
use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, LinearConstraint};
use crate::network::CanonicalProblem;

/// Random points tried in every open subdomain, besides its center.
pub const FALSIFY_PROBES: usize = 8;
/// Constraints kept per subdomain in activation mode; the oldest are dropped first.
pub const MAX_SPLIT_CONSTRAINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchMode {
    Input,
    Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    None,
    Relaxed,
    Complete,
    Both,
}

impl ClipMode {
    pub fn relaxed(self) -> bool {
        matches!(self, ClipMode::Relaxed | ClipMode::Both)
    }

    pub fn complete(self) -> bool {
        matches!(self, ClipMode::Complete | ClipMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabConfig {
    pub mode: BranchMode,
    pub clip: ClipMode,
    pub topk: usize,
    pub batch: usize,
    /// Wall-clock budget in seconds.
    pub timeout: f64,
    pub sequential_clip: bool,
    pub reorder: bool,
    pub passes: usize,
    pub alpha: AlphaPolicy,
    pub seed: u64,
}

impl Default for BabConfig {
    fn default() -> Self {
        Self {
            mode: BranchMode::Input,
            clip: ClipMode::Both,
            topk: 20,
            batch: 8,
            timeout: 60.0,
            sequential_clip: false,
            reorder: false,
            passes: 1,
            alpha: AlphaPolicy::default(),
            seed: 0,
        }
    }
}

/// A node of the search: an input box, forced activations and the input-space
/// constraints known to hold on every counterexample inside it.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub domain: BoxDomain,
    pub splits: Vec<SplitAssignment>,
    pub constraints: Vec<LinearConstraint>,
    /// Lower bound of the objective, worst row.
    pub bound: f64,
    /// Output of the last bounding pass; its intervals seed the children.
    pub result: Arc<BoundResult>,
    pub depth: usize,
}

impl Subdomain {
    pub fn is_assigned(&self, layer: usize, neuron: usize) -> bool {
        self.splits
            .iter()
            .any(|s| s.layer == layer && s.neuron == neuron)
    }
}

/// Neurons per hidden layer chosen for complete clipping.
pub type CriticalNeuronSet = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Verified,
    Falsified {
        counterexample: Vec<f64>,
        value: f64,
    },
    Unknown,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BabStats {
    pub domains_visited: usize,
    pub max_depth: usize,
    pub wall_time: Duration,
    /// Global lower bound after the root and after every batch.
    pub bound_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub status: Verdict,
    /// Best global lower bound reached.
    pub bound: f64,
    pub stats: BabStats,
}

/// `max(0,-l) max(0,u) / (u-l) * max(0, -mean_coeff)`.
pub fn babsr_intercept_score(l: f64, u: f64, mean_coeff: f64) -> f64 {
    if u <= l {
        return 0.0;
    }
    (-l).max(0.0) * u.max(0.0) / (u - l) * (-mean_coeff).max(0.0)
}

/// Per layer, the `k` eligible neurons with the highest scores, lower index first on ties.
pub fn select_topk(scores: &[Vec<f64>], eligible: &[Vec<bool>], k: usize) -> CriticalNeuronSet {
    scores
        .iter()
        .zip(eligible)
        .map(|(s, e)| {
            let mut idx: Vec<usize> = (0..s.len()).filter(|&j| e[j]).collect();
            idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
            idx.truncate(k);
            idx
        })
        .collect()
}

/// BaBSR scores and unstable masks of every hidden neuron; neurons in `splits` are masked out.
fn score_neurons(
    result: &BoundResult,
    splits: &[SplitAssignment],
) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let hidden = result.hidden_bounds();
    let mut scores = Vec::with_capacity(hidden.len());
    let mut eligible = Vec::with_capacity(hidden.len());
    for (i, b) in hidden.iter().enumerate() {
        let status = classify_neurons(b);
        let means = result.coeff_means.get(i);
        scores.push(
            (0..b.len())
                .map(|j| {
                    let m = means.map_or(0.0, |m| m[j]);
                    babsr_intercept_score(b.lower[j], b.upper[j], m)
                })
                .collect(),
        );
        eligible.push(
            (0..b.len())
                .map(|j| {
                    status[j].kind == StabilityKind::Unstable
                        && !splits.iter().any(|s| s.layer == i && s.neuron == j)
                })
                .collect(),
        );
    }
    (scores, eligible)
}

/// Top-`k` unstable neurons per layer by BaBSR score, split neurons included.
pub fn critical_neurons(result: &BoundResult, k: usize) -> CriticalNeuronSet {
    let (scores, eligible) = score_neurons(result, &[]);
    select_topk(&scores, &eligible, k)
}

/// Halfspace whose complement is already verified: `A_lo x + c_lo <= 0` for output row `row`.
pub fn final_plane_to_constraint(result: &BoundResult, row: usize) -> LinearConstraint {
    let (a, c) = result.final_planes().lower_row(row);
    LinearConstraint::new(a.to_vec(), c)
}

/// Input-space condition implied by `split`, from the planes of the split neuron's layer.
pub fn split_constraint_to_input(
    result: &BoundResult,
    split: &SplitAssignment,
) -> LinearConstraint {
    let planes = &result.planes[split.layer];
    let s = split.split_point;
    match split.polarity {
        Polarity::Active => {
            let (a, c) = planes.upper_row(split.neuron);
            LinearConstraint::new(a.iter().map(|v| -v).collect(), s - c)
        }
        Polarity::Inactive => {
            let (a, c) = planes.lower_row(split.neuron);
            LinearConstraint::new(a.to_vec(), c - s)
        }
    }
}

fn widest_dim(domain: &BoxDomain) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, w) in domain.widths().enumerate() {
        if w > 0.0 && best.is_none_or(|(_, bw)| w > bw) {
            best = Some((i, w));
        }
    }
    best
}

fn split_box_at(sub: &Subdomain, dim: usize, mid: f64) -> (Subdomain, Subdomain) {
    let (l, u) = (sub.domain.lower()[dim], sub.domain.upper()[dim]);
    let mut left = sub.clone();
    left.domain = sub.domain.with_bounds(dim, l, u.min(mid));
    left.depth += 1;
    let mut right = sub.clone();
    right.domain = sub.domain.with_bounds(dim, l.max(mid), u);
    right.depth += 1;
    (left, right)
}

/// Splits the widest coordinate at its midpoint (lowest index on ties).
pub fn branch_input(sub: &Subdomain) -> Result<(Subdomain, Subdomain)> {
    let (dim, _) = widest_dim(&sub.domain)
        .ok_or_else(|| Error::CannotBranch("box has zero width in every coordinate".into()))?;
    let mid = (sub.domain.lower()[dim] + sub.domain.upper()[dim]) / 2.0;
    Ok(split_box_at(sub, dim, mid))
}

/// Children `(Inactive, Active)` on neuron `pick`, each with its split constraint appended.
pub fn branch_activation(sub: &Subdomain, pick: (usize, usize)) -> Result<(Subdomain, Subdomain)> {
    let (layer, neuron) = pick;
    if sub.is_assigned(layer, neuron) {
        return Err(Error::CannotBranch(format!(
            "neuron {neuron} of layer {layer} is already split"
        )));
    }
    if layer >= sub.result.hidden_bounds().len() || neuron >= sub.result.bounds[layer].len() {
        return Err(Error::CannotBranch(format!(
            "no ReLU at layer {layer} neuron {neuron}"
        )));
    }
    let child = |polarity| {
        let split = SplitAssignment::relu(layer, neuron, polarity);
        let mut c = sub.clone();
        c.constraints
            .push(split_constraint_to_input(&sub.result, &split));
        let excess = c.constraints.len().saturating_sub(MAX_SPLIT_CONSTRAINTS);
        c.constraints.drain(..excess);
        c.splits.push(split);
        c.depth += 1;
        c
    };
    Ok((child(Polarity::Inactive), child(Polarity::Active)))
}

/// Highest-scoring unstable neuron not yet split, lowest `(layer, neuron)` on ties.
pub fn pick_activation(sub: &Subdomain) -> Option<(usize, usize)> {
    let (scores, eligible) = score_neurons(&sub.result, &sub.splits);
    let mut best: Option<((usize, usize), f64)> = None;
    for (i, (s, e)) in scores.iter().zip(&eligible).enumerate() {
        for j in 0..s.len() {
            if e[j] && best.is_none_or(|(_, b)| s[j] > b) {
                best = Some(((i, j), s[j]));
            }
        }
    }
    best.map(|(p, _)| p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Branch {
    Input { dim: usize, mid: f64 },
    Activation { layer: usize, neuron: usize },
}

fn choose_branch(sub: &Subdomain, mode: BranchMode) -> Result<Branch> {
    if mode == BranchMode::Activation {
        if let Some((layer, neuron)) = pick_activation(sub) {
            return Ok(Branch::Activation { layer, neuron });
        }
    }
    let (dim, _) = widest_dim(&sub.domain)
        .ok_or_else(|| Error::CannotBranch("box has zero width in every coordinate".into()))?;
    let mid = (sub.domain.lower()[dim] + sub.domain.upper()[dim]) / 2.0;
    Ok(Branch::Input { dim, mid })
}

fn clip_box(cfg: &BabConfig, domain: &BoxDomain, cons: &[LinearConstraint]) -> BoxDomain {
    if !cfg.clip.relaxed() || cons.is_empty() || domain.is_empty() {
        return domain.clone();
    }
    if cfg.sequential_clip || cfg.reorder {
        let order = if cfg.reorder {
            ClipOrder::CentroidDistance
        } else {
            ClipOrder::Given
        };
        relaxed_clip_sequential(domain, cons, order)
    } else {
        relaxed_clip_parallel(domain, cons)
    }
}

/// One bounding pass. With complete clipping on, the critical neurons of `parent`
/// and the output rows are refined under `constraints` as each layer is reached.
fn bound_domain(
    problem: &CanonicalProblem,
    cfg: &BabConfig,
    domain: &BoxDomain,
    splits: &[SplitAssignment],
    constraints: &[LinearConstraint],
    parent: Option<&BoundResult>,
) -> Result<BoundResult> {
    let model = &problem.model;
    let last = model.num_layers() - 1;
    let refine = cfg.clip.complete() && !constraints.is_empty();
    let critical = match (refine, parent) {
        (true, Some(p)) if cfg.topk > 0 => critical_neurons(p, cfg.topk),
        _ => Vec::new(),
    };
    let overrides = parent.map(|p| p.bounds.as_slice());
    compute_bounds_with(
        model,
        domain,
        cfg.alpha,
        splits,
        overrides,
        |layer, planes, bounds| {
            if !refine {
                return Ok(());
            }
            let infeasible = |neuron| Error::InfeasibleSplit { layer, neuron };
            if layer == last {
                for row in 0..bounds.len() {
                    let (a, c) = planes.lower_row(row);
                    let sol = coordinate_ascent(a, c, domain, constraints, cfg.passes)?;
                    if sol.is_infeasible() {
                        return Err(infeasible(row));
                    }
                    bounds.lower[row] = bounds.lower[row].max(sol.bound);
                }
                return Ok(());
            }
            let Some(chosen) = critical.get(layer) else {
                return Ok(());
            };
            for &j in chosen {
                if !(bounds.lower[j] < 0.0 && bounds.upper[j] > 0.0) {
                    continue;
                }
                let (a, c) = planes.lower_row(j);
                let lo = coordinate_ascent(a, c, domain, constraints, cfg.passes)?;
                let (a, c) = planes.upper_row(j);
                let neg: Vec<f64> = a.iter().map(|v| -v).collect();
                let hi = coordinate_ascent(&neg, -c, domain, constraints, cfg.passes)?;
                if lo.is_infeasible() || hi.is_infeasible() {
                    return Err(infeasible(j));
                }
                bounds.lower[j] = bounds.lower[j].max(lo.bound);
                bounds.upper[j] = bounds.upper[j].min(-hi.bound);
            }
            Ok(())
        },
    )
}

#[derive(Debug, Clone)]
enum ChildOutcome {
    /// Nothing left to check: bound reached 0, the box was clipped away or the splits contradict.
    Pruned {
        bound: f64,
    },
    Falsified {
        x: Vec<f64>,
    },
    Open(Subdomain),
}

#[derive(Debug, Clone)]
struct Child {
    outcome: ChildOutcome,
    result: Option<Arc<BoundResult>>,
    visited: bool,
    depth: usize,
}

fn try_falsify(
    problem: &CanonicalProblem,
    domain: &BoxDomain,
    probes: &[Vec<f64>],
) -> Option<(Vec<f64>, f64)> {
    std::iter::once(domain.center())
        .chain(probes.iter().map(|t| domain.from_unit(t)))
        .map(|x| {
            let v = problem.margin(&x);
            (x, v)
        })
        .find(|(_, v)| *v < 0.0)
}

/// Clips, bounds and filters one freshly branched child.
fn settle(
    problem: &CanonicalProblem,
    cfg: &BabConfig,
    mut child: Subdomain,
    parent: &BoundResult,
    probes: &[Vec<f64>],
) -> Result<Child> {
    let depth = child.depth;
    let pruned = |visited, result| Child {
        outcome: ChildOutcome::Pruned {
            bound: f64::INFINITY,
        },
        result,
        visited,
        depth,
    };
    if child.domain.is_empty() {
        return Ok(pruned(false, None));
    }
    child.domain = clip_box(cfg, &child.domain, &child.constraints);
    if child.domain.is_empty() {
        return Ok(pruned(false, None));
    }
    let result = match bound_domain(
        problem,
        cfg,
        &child.domain,
        &child.splits,
        &child.constraints,
        Some(parent),
    ) {
        Ok(r) => Arc::new(r),
        Err(Error::InfeasibleSplit { .. }) => return Ok(pruned(true, None)),
        Err(e) => return Err(e),
    };
    let bound = result.worst_lower();
    let outcome = if bound >= 0.0 {
        ChildOutcome::Pruned { bound }
    } else if let Some((x, _)) = try_falsify(problem, &child.domain, probes) {
        ChildOutcome::Falsified { x }
    } else {
        child.bound = bound;
        child.result = result.clone();
        ChildOutcome::Open(child)
    };
    Ok(Child {
        outcome,
        result: Some(result),
        visited: true,
        depth,
    })
}

fn expand(
    problem: &CanonicalProblem,
    cfg: &BabConfig,
    sub: &Subdomain,
    branch: Branch,
    probes: &[Vec<f64>],
) -> Result<[Child; 2]> {
    let (a, b) = match branch {
        Branch::Input { dim, mid } => {
            let (mut a, mut b) = split_box_at(sub, dim, mid);
            let mut cons = if cfg.mode == BranchMode::Activation {
                sub.constraints.clone()
            } else {
                Vec::new()
            };
            for row in 0..sub.result.final_lower().len() {
                if sub.result.final_lower()[row] < 0.0 {
                    cons.push(final_plane_to_constraint(&sub.result, row));
                }
            }
            let excess = cons
                .len()
                .saturating_sub(MAX_SPLIT_CONSTRAINTS.max(problem.objective_count));
            cons.drain(..excess);
            a.constraints = cons.clone();
            b.constraints = cons;
            (a, b)
        }
        Branch::Activation { layer, neuron } => branch_activation(sub, (layer, neuron))?,
    };
    let (p0, p1) = probes.split_at(probes.len() / 2);
    Ok([
        settle(problem, cfg, a, &sub.result, p0)?,
        settle(problem, cfg, b, &sub.result, p1)?,
    ])
}

struct Queued(Subdomain, u64);

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
    // BinaryHeap pops the maximum: lowest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then(other.1.cmp(&self.1))
    }
}

fn draw_probes(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random()).collect())
        .collect()
}

/// Root bounding pass for one single-row problem.
fn root(problem: &CanonicalProblem, cfg: &BabConfig) -> Result<Subdomain> {
    let result = bound_domain(problem, cfg, &problem.input_box, &[], &[], None)?;
    Ok(Subdomain {
        domain: problem.input_box.clone(),
        splits: Vec::new(),
        constraints: Vec::new(),
        bound: result.worst_lower(),
        result: Arc::new(result),
        depth: 0,
    })
}

enum RowVerdict {
    Verified,
    Falsified(Vec<f64>),
    Unknown,
}

struct RowRun<'a> {
    problem: &'a CanonicalProblem,
    cfg: &'a BabConfig,
    deadline: Instant,
}

impl RowRun<'_> {
    /// Runs to completion or deadline. `bounds[row]` tracks this row's frontier bound.
    fn run(
        &self,
        start: Subdomain,
        rng: &mut ChaCha8Rng,
        stats: &mut BabStats,
        row_bounds: &mut [f64],
        row: usize,
    ) -> Result<RowVerdict> {
        let dim = self.problem.model.input_dim();
        let mut heap = BinaryHeap::new();
        let mut next_id = 0u64;
        let mut leaf_min = f64::INFINITY;
        let mut stuck: Vec<Subdomain> = Vec::new();
        heap.push(Queued(start, next_id));
        next_id += 1;
        while let Some(top) = heap.peek() {
            row_bounds[row] = row_bounds[row].max(top.0.bound.min(leaf_min));
            if Instant::now() >= self.deadline {
                return Ok(RowVerdict::Unknown);
            }
            let mut batch = Vec::with_capacity(self.cfg.batch);
            while batch.len() < self.cfg.batch.max(1) {
                match heap.pop() {
                    Some(Queued(s, _)) => batch.push(s),
                    None => break,
                }
            }
            let probes: Vec<Vec<Vec<f64>>> = batch
                .iter()
                .map(|_| draw_probes(rng, dim, 2 * FALSIFY_PROBES))
                .collect();
            let expanded: Vec<Result<[Child; 2]>> = batch
                .par_iter()
                .zip(probes.par_iter())
                .map(|(sub, p)| {
                    let branch = choose_branch(sub, self.cfg.mode)?;
                    expand(self.problem, self.cfg, sub, branch, p)
                })
                .collect();
            for (sub, res) in batch.into_iter().zip(expanded) {
                let children = match res {
                    Ok(c) => c,
                    Err(Error::CannotBranch(_)) => {
                        leaf_min = leaf_min.min(sub.bound);
                        stuck.push(sub);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for child in children {
                    stats.domains_visited += usize::from(child.visited);
                    stats.max_depth = stats.max_depth.max(child.depth);
                    match child.outcome {
                        ChildOutcome::Pruned { bound } => leaf_min = leaf_min.min(bound),
                        ChildOutcome::Falsified { x } => return Ok(RowVerdict::Falsified(x)),
                        ChildOutcome::Open(s) => {
                            heap.push(Queued(s, next_id));
                            next_id += 1;
                        }
                    }
                }
            }
            let frontier = heap
                .peek()
                .map_or(f64::INFINITY, |q| q.0.bound)
                .min(leaf_min);
            row_bounds[row] = row_bounds[row].max(frontier);
            stats
                .bound_history
                .push(row_bounds.iter().copied().fold(f64::INFINITY, f64::min));
        }
        if stuck.is_empty() {
            Ok(RowVerdict::Verified)
        } else {
            Ok(RowVerdict::Unknown)
        }
    }
}

/// Runs branch-and-bound on every objective row of `problem` in turn.
pub fn verify(problem: &CanonicalProblem, cfg: &BabConfig) -> Result<VerificationOutcome> {
    let started = Instant::now();
    let deadline = started + Duration::from_secs_f64(cfg.timeout.max(0.0));
    let mut stats = BabStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = problem.objective_count;
    let finish = |status, bound: f64, mut stats: BabStats| {
        stats.wall_time = started.elapsed();
        Ok(VerificationOutcome {
            status,
            bound,
            stats,
        })
    };
    if Instant::now() >= deadline {
        return finish(Verdict::Unknown, f64::NEG_INFINITY, stats);
    }
    let dim = problem.model.input_dim();
    let mut roots = Vec::with_capacity(rows);
    let mut row_bounds = vec![f64::NEG_INFINITY; rows];
    for k in 0..rows {
        let row_problem = problem.row(k);
        let r = root(&row_problem, cfg)?;
        stats.domains_visited += 1;
        row_bounds[k] = r.bound;
        let probes = draw_probes(&mut rng, dim, FALSIFY_PROBES);
        if r.bound < 0.0 {
            if let Some((x, _)) = try_falsify(&row_problem, &r.domain, &probes) {
                let value = problem.margin(&x);
                stats
                    .bound_history
                    .push(row_bounds.iter().copied().fold(f64::INFINITY, f64::min));
                return finish(
                    Verdict::Falsified {
                        counterexample: x,
                        value,
                    },
                    global(&row_bounds),
                    stats,
                );
            }
        }
        roots.push((row_problem, r));
    }
    stats.bound_history.push(global(&row_bounds));
    let mut unknown = false;
    for (k, (row_problem, r)) in roots.into_iter().enumerate() {
        if r.bound >= 0.0 {
            continue;
        }
        let runner = RowRun {
            problem: &row_problem,
            cfg,
            deadline,
        };
        match runner.run(r, &mut rng, &mut stats, &mut row_bounds, k)? {
            RowVerdict::Verified => {}
            RowVerdict::Falsified(x) => {
                let value = problem.margin(&x);
                return finish(
                    Verdict::Falsified {
                        counterexample: x,
                        value,
                    },
                    global(&row_bounds),
                    stats,
                );
            }
            RowVerdict::Unknown => {
                unknown = true;
                if Instant::now() >= deadline {
                    break;
                }
            }
        }
    }
    let status = if unknown {
        Verdict::Unknown
    } else {
        Verdict::Verified
    };
    finish(status, global(&row_bounds), stats)
}

fn global(row_bounds: &[f64]) -> f64 {
    row_bounds.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn input_bab(problem: &CanonicalProblem, cfg: &BabConfig) -> Result<VerificationOutcome> {
    verify(
        problem,
        &BabConfig {
            mode: BranchMode::Input,
            ..cfg.clone()
        },
    )
}

pub fn activation_bab(problem: &CanonicalProblem, cfg: &BabConfig) -> Result<VerificationOutcome> {
    verify(
        problem,
        &BabConfig {
            mode: BranchMode::Activation,
            ..cfg.clone()
        },
    )
}

/// Result of running two configurations over the same branching trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub reference_visited: usize,
    pub candidate_visited: usize,
    /// Number of subdomains bounded under both configurations.
    pub paired: usize,
    /// Paired subdomains where some hidden interval of the candidate left the reference interval.
    pub violations: usize,
    /// The reference run stopped before exhausting its queue.
    pub truncated: bool,
}

fn hidden_within(inner: &BoundResult, outer: &BoundResult, tol: f64) -> bool {
    inner
        .hidden_bounds()
        .iter()
        .zip(outer.hidden_bounds())
        .all(|(a, b): (&LayerBounds, &LayerBounds)| a.is_within(b, tol))
}

/// Runs `reference` and `candidate` in lockstep on a single-row problem. Every branching
/// decision is taken from the reference subdomain and applied to both; the candidate
/// subtree stops as soon as the candidate prunes. Sequential, one node at a time.
pub fn replay_pair(
    problem: &CanonicalProblem,
    reference: &BabConfig,
    candidate: &BabConfig,
    max_nodes: usize,
    tol: f64,
) -> Result<ReplayReport> {
    if problem.objective_count != 1 {
        return Err(Error::InvalidProperty(
            "replay expects a single objective row".into(),
        ));
    }
    let mut report = ReplayReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(reference.seed);
    let r0 = root(problem, reference)?;
    let c0 = root(problem, candidate)?;
    report.reference_visited = 1;
    report.candidate_visited = 1;
    report.paired = 1;
    report.violations += usize::from(!hidden_within(&c0.result, &r0.result, tol));
    if r0.bound >= 0.0 {
        return Ok(report);
    }
    let cand0 = (c0.bound < 0.0).then_some(c0);
    let mut heap: BinaryHeap<Queued> = BinaryHeap::new();
    let mut partners: Vec<Option<Subdomain>> = vec![cand0];
    heap.push(Queued(r0, 0));
    let dim = problem.model.input_dim();
    while let Some(Queued(sub, id)) = heap.pop() {
        if report.reference_visited >= max_nodes {
            report.truncated = true;
            break;
        }
        let partner = partners[id as usize].take();
        let branch = choose_branch(&sub, reference.mode)?;
        let probes = draw_probes(&mut rng, dim, 2 * FALSIFY_PROBES);
        let ref_children = expand(problem, reference, &sub, branch, &probes)?;
        let cand_children = match &partner {
            Some(p) => Some(expand(problem, candidate, p, branch, &probes)?),
            None => None,
        };
        for (k, rc) in ref_children.into_iter().enumerate() {
            report.reference_visited += usize::from(rc.visited);
            let cc = cand_children.as_ref().map(|c| c[k].clone());
            let mut next_partner = None;
            if let Some(cc) = cc {
                report.candidate_visited += usize::from(cc.visited);
                if let (Some(a), Some(b)) = (&cc.result, &rc.result) {
                    report.paired += 1;
                    report.violations += usize::from(!hidden_within(a, b, tol));
                }
                if let ChildOutcome::Open(s) = cc.outcome {
                    next_partner = Some(s);
                }
            }
            match rc.outcome {
                ChildOutcome::Open(s) => {
                    partners.push(next_partner);
                    heap.push(Queued(s, partners.len() as u64 - 1));
                }
                ChildOutcome::Falsified { .. } => {
                    report.truncated = true;
                    return Ok(report);
                }
                ChildOutcome::Pruned { .. } => {}
            }
        }
    }
    Ok(report)
}
