//! Exhaustive reference solvers for small instances.
//!
//! Everything here is exponential by design and refuses to run past a fixed budget.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crown::{Polarity, SplitAssignment};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{concretize, BoxDomain, Direction, LinearConstraint};
use crate::linalg::dot;
use crate::network::CanonicalProblem;

/// Feasibility slack when filtering vertex candidates.
pub const FEAS_SLACK: f64 = 1e-9;
pub const MAX_LP_DIM: usize = 10;
/// Upper limit on the number of vertex candidates a single LP may enumerate.
pub const MAX_LP_CANDIDATES: u64 = 20_000_000;
pub const MAX_EXACT_INPUT_DIM: usize = 6;
pub const MAX_EXACT_LEAVES: usize = 1 << 14;
const PHASE_ONE_SAMPLES: usize = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, argopt: Vec<f64> },
    Infeasible,
}

impl LpOutcome {
    pub fn value(&self, direction: Direction) -> f64 {
        match (self, direction) {
            (LpOutcome::Optimal { value, .. }, _) => *value,
            (LpOutcome::Infeasible, Direction::Min) => f64::INFINITY,
            (LpOutcome::Infeasible, Direction::Max) => f64::NEG_INFINITY,
        }
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| {
        acc.saturating_mul((n - i) as u64) / (i as u64 + 1)
    })
}

fn candidate_count(n: usize, m: usize) -> u64 {
    (0..=n.min(m))
        .map(|k| {
            binomial(m, k)
                .saturating_mul(binomial(n, k))
                .saturating_mul(1u64 << (n - k))
        })
        .fold(0u64, u64::saturating_add)
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn is_feasible(x: &[f64], domain: &BoxDomain, cons: &[LinearConstraint]) -> bool {
    domain.contains(x, FEAS_SLACK) && cons.iter().all(|k| k.residual(x) <= FEAS_SLACK)
}

/// Exact optimum of `a.x + c` over `box ∩ {Gx + h <= 0}` by vertex enumeration.
pub fn lp_box_oracle(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &[LinearConstraint],
    direction: Direction,
) -> Result<LpOutcome> {
    let n = domain.dim();
    check_dim(n, a.len())?;
    for k in cons {
        check_dim(n, k.dim())?;
    }
    if domain.is_empty() {
        return Err(Error::EmptyBox);
    }
    if n > MAX_LP_DIM {
        return Err(Error::BudgetExceeded(format!(
            "LP dimension {n} > {MAX_LP_DIM}"
        )));
    }
    let m = cons.len();
    let budget = candidate_count(n, m);
    if budget > MAX_LP_CANDIDATES {
        return Err(Error::BudgetExceeded(format!(
            "{budget} vertex candidates for n = {n}, m = {m}"
        )));
    }
    let sign = match direction {
        Direction::Min => 1.0,
        Direction::Max => -1.0,
    };
    let (lo, hi) = (domain.lower(), domain.upper());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |x: Vec<f64>| {
        if !is_feasible(&x, domain, cons) {
            return;
        }
        let v = sign * (dot(a, &x) + c);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, x));
        }
    };
    let mut x = vec![0.0; n];
    for k in 0..=n.min(m) {
        for_each_subset(m, k, |rows| {
            for_each_subset(n, k, |free| {
                let fixed: Vec<usize> = (0..n).filter(|j| !free.contains(j)).collect();
                let lu = (k > 0)
                    .then(|| DMatrix::from_fn(k, k, |r, s| cons[rows[r]].g[free[s]]).full_piv_lu());
                if let Some(lu) = &lu {
                    let u = lu.u();
                    let diag: Vec<f64> = (0..k).map(|i| u[(i, i)].abs()).collect();
                    let max = diag.iter().copied().fold(0.0, f64::max);
                    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
                    if max == 0.0 || min <= 1e-12 * max {
                        return;
                    }
                }
                for mask in 0u64..(1u64 << fixed.len()) {
                    for (bit, &j) in fixed.iter().enumerate() {
                        x[j] = if mask >> bit & 1 == 0 { lo[j] } else { hi[j] };
                    }
                    if let Some(lu) = &lu {
                        let rhs = DVector::from_fn(k, |r, _| {
                            let row = &cons[rows[r]];
                            -row.h - fixed.iter().map(|&j| row.g[j] * x[j]).sum::<f64>()
                        });
                        let Some(sol) = lu.solve(&rhs) else { continue };
                        for (s, &j) in free.iter().enumerate() {
                            x[j] = sol[s];
                        }
                    }
                    consider(x.clone());
                }
            });
        });
    }
    match best {
        Some((v, argopt)) => Ok(LpOutcome::Optimal {
            value: sign * v,
            argopt,
        }),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            for _ in 0..PHASE_ONE_SAMPLES {
                let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                let x = domain.from_unit(&t);
                if cons.iter().all(|k| k.residual(&x) <= 0.0) {
                    return Err(Error::OracleInconsistent(format!(
                        "no feasible vertex but {x:?} is feasible"
                    )));
                }
            }
            Ok(LpOutcome::Infeasible)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    /// Minimum over the region of the smallest objective row; `+inf` if the region is empty.
    pub min_value: f64,
    pub witness: Option<Vec<f64>>,
    pub patterns: usize,
}

impl ExactResult {
    pub fn holds(&self) -> bool {
        self.min_value >= 0.0
    }
}

struct Search<'a> {
    problem: &'a CanonicalProblem,
    domain: &'a BoxDomain,
    forced: Vec<Vec<Option<Polarity>>>,
    best: Option<(f64, Vec<f64>)>,
    patterns: usize,
}

/// Affine forms `x -> A x + c` of a layer's activations.
#[derive(Clone)]
struct Forms {
    a: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl Search<'_> {
    /// Continues at neuron `j` of hidden layer `layer` whose exact pre-activation forms are `pre`;
    /// `post` collects the activation forms of this layer decided so far.
    fn visit(
        &mut self,
        layer: usize,
        j: usize,
        pre: &Forms,
        post: &mut Forms,
        cons: &mut Vec<LinearConstraint>,
    ) -> Result<()> {
        let layers = self.problem.model.layers();
        let hidden = layers.len() - 1;
        if layer == hidden {
            return self.leaf(pre, cons);
        }
        if j == pre.c.len() {
            let next = propagate(
                &layers[layer + 1].weights.to_rows(),
                &layers[layer + 1].bias,
                post,
            );
            let mut fresh = Forms {
                a: vec![],
                c: vec![],
            };
            return self.visit(layer + 1, 0, &next, &mut fresh, cons);
        }
        let (za, zc) = (&pre.a[j], pre.c[j]);
        // Range of the neuron over the region carved out so far.
        let lo = lp_box_oracle(za, zc, self.domain, cons, Direction::Min)?;
        if lo == LpOutcome::Infeasible {
            return Ok(());
        }
        let lo = lo.value(Direction::Min);
        let hi = lp_box_oracle(za, zc, self.domain, cons, Direction::Max)?.value(Direction::Max);
        let choices: Vec<Polarity> = match self.forced[layer][j] {
            Some(p) => vec![p],
            None if lo >= 0.0 => vec![Polarity::Active],
            None if hi <= 0.0 => vec![Polarity::Inactive],
            None => vec![Polarity::Active, Polarity::Inactive],
        };
        let branching = choices.len() > 1 || self.forced[layer][j].is_some();
        for p in choices {
            let pushed = if branching {
                let k = match p {
                    Polarity::Inactive => LinearConstraint::new(za.clone(), zc),
                    Polarity::Active => LinearConstraint::new(za.iter().map(|v| -v).collect(), -zc),
                };
                if concretize(&k.g, k.h, self.domain, Direction::Min)? > 0.0 {
                    continue;
                }
                cons.push(k);
                true
            } else {
                false
            };
            match p {
                Polarity::Active => {
                    post.a.push(za.clone());
                    post.c.push(zc);
                }
                Polarity::Inactive => {
                    post.a.push(vec![0.0; za.len()]);
                    post.c.push(0.0);
                }
            }
            let res = self.visit(layer, j + 1, pre, post, cons);
            post.a.pop();
            post.c.pop();
            if pushed {
                cons.pop();
            }
            res?;
        }
        Ok(())
    }

    fn leaf(&mut self, out: &Forms, cons: &[LinearConstraint]) -> Result<()> {
        self.patterns += 1;
        if self.patterns > MAX_EXACT_LEAVES {
            return Err(Error::BudgetExceeded(format!(
                "more than {MAX_EXACT_LEAVES} activation patterns"
            )));
        }
        for (a, c) in out.a.iter().zip(&out.c) {
            if let LpOutcome::Optimal { value, argopt } =
                lp_box_oracle(a, *c, self.domain, cons, Direction::Min)?
            {
                if self.best.as_ref().is_none_or(|(b, _)| value < *b) {
                    self.best = Some((value, argopt));
                }
            }
        }
        Ok(())
    }
}

fn propagate(weights: &[Vec<f64>], bias: &[f64], prev: &Forms) -> Forms {
    let n = prev.a.first().map_or(0, |r| r.len());
    let mut a = Vec::with_capacity(weights.len());
    let mut c = Vec::with_capacity(weights.len());
    for (w, b) in weights.iter().zip(bias) {
        let mut row = vec![0.0; n];
        let mut cst = *b;
        for (wk, (ak, ck)) in w.iter().zip(prev.a.iter().zip(&prev.c)) {
            if *wk == 0.0 {
                continue;
            }
            for (r, v) in row.iter_mut().zip(ak) {
                *r += wk * v;
            }
            cst += wk * ck;
        }
        a.push(row);
        c.push(cst);
    }
    Forms { a, c }
}

/// Exact minimum of the canonical margin over `domain`, restricted to inputs whose
/// activation pattern agrees with `forced`, by enumerating activation patterns.
pub fn exact_verify(
    problem: &CanonicalProblem,
    domain: &BoxDomain,
    forced: &[SplitAssignment],
) -> Result<ExactResult> {
    let model = &problem.model;
    let n = model.input_dim();
    check_dim(n, domain.dim())?;
    if domain.is_empty() {
        return Err(Error::EmptyBox);
    }
    if n > MAX_EXACT_INPUT_DIM {
        return Err(Error::BudgetExceeded(format!(
            "input dimension {n} > {MAX_EXACT_INPUT_DIM}"
        )));
    }
    let layers = model.layers();
    let mut table: Vec<Vec<Option<Polarity>>> = layers[..layers.len() - 1]
        .iter()
        .map(|l| vec![None; l.out_dim()])
        .collect();
    for s in forced {
        if s.split_point != 0.0 {
            return Err(Error::UnsupportedSplitPoint(s.split_point));
        }
        let slot = table
            .get_mut(s.layer)
            .and_then(|l| l.get_mut(s.neuron))
            .ok_or_else(|| {
                Error::CannotBranch(format!("no ReLU at layer {} neuron {}", s.layer, s.neuron))
            })?;
        if slot.is_some_and(|p| p != s.polarity) {
            return Ok(ExactResult {
                min_value: f64::INFINITY,
                witness: None,
                patterns: 0,
            });
        }
        *slot = Some(s.polarity);
    }
    let input = Forms {
        a: (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
        c: vec![0.0; n],
    };
    let first = propagate(&layers[0].weights.to_rows(), &layers[0].bias, &input);
    let mut search = Search {
        problem,
        domain,
        forced: table,
        best: None,
        patterns: 0,
    };
    let mut post = Forms {
        a: vec![],
        c: vec![],
    };
    search.visit(0, 0, &first, &mut post, &mut Vec::new())?;
    Ok(match search.best {
        Some((min_value, x)) => ExactResult {
            min_value,
            witness: Some(x),
            patterns: search.patterns,
        },
        None => ExactResult {
            min_value: f64::INFINITY,
            witness: None,
            patterns: search.patterns,
        },
    })
}

/// Best of `count` seeded uniform samples and the box center, by canonical margin.
pub fn sample_attack(
    problem: &CanonicalProblem,
    domain: &BoxDomain,
    count: usize,
    seed: u64,
) -> (Vec<f64>, f64) {
    let mut best_x = domain.center();
    let mut best_v = problem.margin(&best_x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let t: Vec<f64> = (0..domain.dim()).map(|_| rng.random()).collect();
        let x = domain.from_unit(&t);
        let v = problem.margin(&x);
        if v < best_v {
            best_v = v;
            best_x = x;
        }
    }
    (best_x, best_v)
}
