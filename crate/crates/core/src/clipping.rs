//! Constraint-driven bound refinement.
//!
//! *Complete clipping* tightens `min a.x + c` over `box ∩ {Gx + h <= 0}` through the
//! Lagrangian dual `D(β) = min_box (a + βG).x + c + βh`, which for one constraint is
//! concave and piecewise linear in `β` with breakpoints `-a_j / g_j` and can be
//! maximized exactly by a sorted sweep. Several constraints are handled by coordinate
//! ascent over `β`.
//!
//! *Relaxed clipping* shrinks the box itself to the tightest axis-aligned box that
//! still contains `box ∩ {g.x + h <= 0}`.

use crate::error::{check_dim, Error, Result};
use crate::geometry::{centroid_distance, concretize, BoxDomain, Direction, LinearConstraint};
use crate::linalg::dot;

/// Coefficients smaller than this are treated as zero.
const COEF_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualStatus {
    Optimal,
    /// Some constraint excludes the whole box; the constrained minimum is `+inf`.
    InfeasiblePrimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// One multiplier per constraint.
    pub beta_star: Vec<f64>,
    pub bound: f64,
    pub status: DualStatus,
}

impl DualSolution {
    fn infeasible(m: usize, bound: f64) -> Self {
        Self {
            beta_star: vec![0.0; m],
            bound,
            status: DualStatus::InfeasiblePrimal,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == DualStatus::InfeasiblePrimal
    }

    fn negated(mut self) -> Self {
        self.bound = -self.bound;
        self
    }
}

/// `D(β)` for a single constraint.
pub fn dual_objective(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &LinearConstraint,
    beta: f64,
) -> f64 {
    let x = domain.center();
    let eps = domain.radius();
    dual_value(a, c, &cons.g, cons.h, &x, &eps, beta)
}

fn dual_value(a: &[f64], c: f64, g: &[f64], h: f64, x: &[f64], eps: &[f64], beta: f64) -> f64 {
    let mut v = c + beta * h;
    for j in 0..a.len() {
        let w = a[j] + beta * g[j];
        v += w * x[j] - w.abs() * eps[j];
    }
    v
}

/// Breakpoints `-a_j / g_j` of the single-constraint dual, in coordinate order.
/// Coordinates with `g_j = 0` have none.
pub fn breakpoints(a: &[f64], cons: &LinearConstraint) -> Vec<f64> {
    a.iter()
        .zip(&cons.g)
        .filter(|(_, g)| g.abs() >= COEF_EPS)
        .map(|(a, g)| -a / g)
        .collect()
}

/// Maximizes the 1D dual. Returns `None` when the constraint excludes the box.
fn solve_1d(a: &[f64], c: f64, g: &[f64], h: f64, x: &[f64], eps: &[f64]) -> Option<(f64, f64)> {
    let min_g = dot(g, x) + h - g.iter().zip(eps).map(|(g, e)| g.abs() * e).sum::<f64>();
    if min_g > 0.0 {
        return None;
    }
    let mut points: Vec<(f64, usize)> = (0..a.len())
        .filter(|&j| g[j].abs() >= COEF_EPS)
        .map(|j| (-a[j] / g[j], j))
        .collect();
    points.sort_by(|p, q| p.0.total_cmp(&q.0));

    // Supergradient of D left of every breakpoint; each breakpoint lowers it by 2|g_j|ε_j.
    let mut slope = dot(g, x)
        + h
        + (0..a.len())
            .filter(|&j| g[j].abs() >= COEF_EPS)
            .map(|j| g[j].abs() * eps[j])
            .sum::<f64>();
    let mut beta = 0.0;
    if slope > 0.0 {
        for &(q, j) in &points {
            slope -= 2.0 * g[j].abs() * eps[j];
            if slope <= 0.0 {
                beta = q.max(0.0);
                break;
            }
        }
    }
    let at_beta = dual_value(a, c, g, h, x, eps, beta);
    let at_zero = dual_value(a, c, g, h, x, eps, 0.0);
    if at_zero > at_beta {
        Some((0.0, at_zero))
    } else {
        Some((beta, at_beta))
    }
}

fn check_problem(a: &[f64], domain: &BoxDomain, cons: &[LinearConstraint]) -> Result<()> {
    check_dim(domain.dim(), a.len())?;
    for k in cons {
        check_dim(domain.dim(), k.dim())?;
    }
    if domain.is_empty() {
        return Err(Error::EmptyBox);
    }
    Ok(())
}

/// Exact `min a.x + c` over `box ∩ {g.x + h <= 0}`.
pub fn tighten_lower_single(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &LinearConstraint,
) -> Result<DualSolution> {
    check_problem(a, domain, std::slice::from_ref(cons))?;
    let (x, eps) = (domain.center(), domain.radius());
    Ok(match solve_1d(a, c, &cons.g, cons.h, &x, &eps) {
        Some((beta, bound)) => DualSolution {
            beta_star: vec![beta],
            bound,
            status: DualStatus::Optimal,
        },
        None => DualSolution::infeasible(1, f64::INFINITY),
    })
}

/// Exact `max a.x + c` over `box ∩ {g.x + h <= 0}`.
pub fn tighten_upper_single(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &LinearConstraint,
) -> Result<DualSolution> {
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    tighten_lower_single(&neg, -c, domain, cons).map(DualSolution::negated)
}

/// Sound lower bound on `min a.x + c` over `box ∩ {Gx + h <= 0}` by coordinate ascent
/// on the multipliers, `passes` sweeps over the constraints in order.
pub fn coordinate_ascent(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &[LinearConstraint],
    passes: usize,
) -> Result<DualSolution> {
    coordinate_ascent_traced(a, c, domain, cons, passes).map(|(s, _)| s)
}

/// [`coordinate_ascent`] that also returns the dual objective after every update.
pub fn coordinate_ascent_traced(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &[LinearConstraint],
    passes: usize,
) -> Result<(DualSolution, Vec<f64>)> {
    check_problem(a, domain, cons)?;
    let m = cons.len();
    let (x, eps) = (domain.center(), domain.radius());
    let base = concretize(a, c, domain, Direction::Min)?;
    for k in cons {
        let min_g = concretize(&k.g, k.h, domain, Direction::Min)?;
        if min_g > 0.0 {
            return Ok((DualSolution::infeasible(m, f64::INFINITY), vec![]));
        }
    }
    let mut beta = vec![0.0; m];
    let mut trace = Vec::with_capacity(m * passes.max(1));
    let mut a_eff = vec![0.0; a.len()];
    for _ in 0..passes.max(1) {
        for k in 0..m {
            a_eff.copy_from_slice(a);
            let mut c_eff = c;
            for (p, cp) in cons.iter().enumerate() {
                if p == k || beta[p] == 0.0 {
                    continue;
                }
                for (ae, gp) in a_eff.iter_mut().zip(&cp.g) {
                    *ae += beta[p] * gp;
                }
                c_eff += beta[p] * cp.h;
            }
            let (bk, value) = solve_1d(&a_eff, c_eff, &cons[k].g, cons[k].h, &x, &eps)
                .expect("feasibility checked above");
            beta[k] = bk;
            trace.push(value);
        }
    }
    let mut bound = combined_dual(a, c, cons, &beta, &x, &eps);
    if base > bound {
        beta.iter_mut().for_each(|b| *b = 0.0);
        bound = base;
    }
    let sol = DualSolution {
        beta_star: beta,
        bound,
        status: DualStatus::Optimal,
    };
    Ok((sol, trace))
}

fn combined_dual(
    a: &[f64],
    c: f64,
    cons: &[LinearConstraint],
    beta: &[f64],
    x: &[f64],
    eps: &[f64],
) -> f64 {
    let mut w = a.to_vec();
    let mut cst = c;
    for (k, b) in cons.iter().zip(beta) {
        for (wj, gj) in w.iter_mut().zip(&k.g) {
            *wj += b * gj;
        }
        cst += b * k.h;
    }
    cst + w
        .iter()
        .zip(x)
        .zip(eps)
        .map(|((w, x), e)| w * x - w.abs() * e)
        .sum::<f64>()
}

/// Per-coordinate bounds implied by one constraint on `[lower, upper]`, written into
/// `new_lower`/`new_upper` (only ever tightened). Returns false if the constraint
/// excludes the box outright.
fn clip_into(
    lower: &[f64],
    upper: &[f64],
    cons: &LinearConstraint,
    new_lower: &mut [f64],
    new_upper: &mut [f64],
) -> bool {
    let min_term = |j: usize| {
        let g = cons.g[j];
        if g >= 0.0 {
            g * lower[j]
        } else {
            g * upper[j]
        }
    };
    let total: f64 = (0..lower.len()).map(min_term).sum();
    if cons.g.iter().all(|g| g.abs() < COEF_EPS) {
        return total + cons.h <= 0.0;
    }
    for i in 0..lower.len() {
        let gi = cons.g[i];
        if gi.abs() < COEF_EPS {
            continue;
        }
        let rest = total - min_term(i);
        let bound = (-rest - cons.h) / gi;
        if gi > 0.0 {
            new_upper[i] = new_upper[i].min(bound);
        } else {
            new_lower[i] = new_lower[i].max(bound);
        }
    }
    true
}

fn mark_empty(mut lower: Vec<f64>, mut upper: Vec<f64>) -> BoxDomain {
    if lower.iter().zip(&upper).all(|(l, u)| l <= u) {
        // Force a crossing so the box reports empty.
        lower[0] = 1.0;
        upper[0] = 0.0;
    }
    BoxDomain::from_raw(lower, upper)
}

/// Tightest axis-aligned box containing `box ∩ {g.x + h <= 0}`.
pub fn relaxed_clip_single(domain: &BoxDomain, cons: &LinearConstraint) -> BoxDomain {
    relaxed_clip_parallel(domain, std::slice::from_ref(cons))
}

/// Clips against every constraint using the original box, keeping the tightest bound per
/// coordinate.
pub fn relaxed_clip_parallel(domain: &BoxDomain, cons: &[LinearConstraint]) -> BoxDomain {
    if domain.is_empty() {
        return domain.clone();
    }
    let (lo, hi) = (domain.lower(), domain.upper());
    let mut new_lower = lo.to_vec();
    let mut new_upper = hi.to_vec();
    for k in cons {
        debug_assert_eq!(k.dim(), domain.dim());
        if !clip_into(lo, hi, k, &mut new_lower, &mut new_upper) {
            return mark_empty(new_lower, new_upper);
        }
    }
    BoxDomain::from_raw(new_lower, new_upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipOrder {
    #[default]
    Given,
    /// Ascending distance from the box center to the constraint hyperplane.
    CentroidDistance,
}

/// Clips against one constraint at a time, each against the box produced by the previous one.
pub fn relaxed_clip_sequential(
    domain: &BoxDomain,
    cons: &[LinearConstraint],
    order: ClipOrder,
) -> BoxDomain {
    if domain.is_empty() {
        return domain.clone();
    }
    let mut ordered: Vec<&LinearConstraint> = Vec::with_capacity(cons.len());
    match order {
        ClipOrder::Given => ordered.extend(cons),
        ClipOrder::CentroidDistance => {
            let mut keyed = Vec::with_capacity(cons.len());
            for k in cons {
                match centroid_distance(domain, k) {
                    Ok(d) => keyed.push((d, k)),
                    // Zero normal: either vacuous or excludes everything.
                    Err(_) if k.h > 0.0 => {
                        return mark_empty(domain.lower().to_vec(), domain.upper().to_vec())
                    }
                    Err(_) => {}
                }
            }
            keyed.sort_by(|p, q| p.0.total_cmp(&q.0));
            ordered.extend(keyed.into_iter().map(|(_, k)| k));
        }
    }
    let mut lower = domain.lower().to_vec();
    let mut upper = domain.upper().to_vec();
    for k in ordered {
        let (mut nl, mut nu) = (lower.clone(), upper.clone());
        if !clip_into(&lower, &upper, k, &mut nl, &mut nu) {
            return mark_empty(nl, nu);
        }
        lower = nl;
        upper = nu;
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            break;
        }
    }
    BoxDomain::from_raw(lower, upper)
}

/// `max r.y` subject to `s.y <= t`, `y ∈ [0,1]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackInstance {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub t: f64,
    /// `a.(x̂ - ε) + c`; the source minimum is `base - max r.y`.
    pub base: f64,
}

/// Rewrites `min a.x + c` over `box ∩ {g.x + h <= 0}` with `x = x̂ - ε + 2ε∘y`.
pub fn to_knapsack(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &LinearConstraint,
) -> Result<KnapsackInstance> {
    check_problem(a, domain, std::slice::from_ref(cons))?;
    let lo = domain.lower();
    let eps = domain.radius();
    Ok(KnapsackInstance {
        r: a.iter().zip(&eps).map(|(a, e)| -2.0 * e * a).collect(),
        s: cons.g.iter().zip(&eps).map(|(g, e)| 2.0 * e * g).collect(),
        t: -(dot(&cons.g, lo) + cons.h),
        base: dot(a, lo) + c,
    })
}

/// Fractional greedy optimum of a continuous knapsack; `None` if infeasible.
pub fn greedy_knapsack(inst: &KnapsackInstance) -> Option<f64> {
    let mut value = 0.0;
    let mut cap = inst.t;
    let mut items = Vec::new();
    for (&r, &s) in inst.r.iter().zip(&inst.s) {
        let (r, s) = if s < 0.0 {
            // y = 1 - y'
            value += r;
            cap -= s;
            (-r, -s)
        } else {
            (r, s)
        };
        if s == 0.0 {
            value += r.max(0.0);
        } else if r > 0.0 {
            items.push((r, s));
        }
    }
    if cap < 0.0 {
        return None;
    }
    items.sort_by(|p, q| (q.0 / q.1).total_cmp(&(p.0 / p.1)));
    for (r, s) in items {
        if cap <= 0.0 {
            break;
        }
        let take = (cap / s).min(1.0);
        value += take * r;
        cap -= take * s;
    }
    Some(value)
}

/// Constrained minimum via [`to_knapsack`] and [`greedy_knapsack`]; `+inf` if infeasible.
pub fn knapsack_lower_bound(
    a: &[f64],
    c: f64,
    domain: &BoxDomain,
    cons: &LinearConstraint,
) -> Result<f64> {
    let inst = to_knapsack(a, c, domain, cons)?;
    Ok(greedy_knapsack(&inst).map_or(f64::INFINITY, |v| inst.base - v))
}
