//! Axis-aligned input boxes, halfspace constraints and closed-form
//! concretization of affine functions over boxes.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::dot;

/// Axis-aligned box `lower <= x <= upper`.
///
/// A box whose bounds cross in some coordinate is kept around (it is the
/// result of clipping away every point) and flagged as empty.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    empty: bool,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidProperty(
                "box must have dimension >= 1".into(),
            ));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProperty("box bounds must be finite".into()));
        }
        let empty = lower.iter().zip(&upper).any(|(l, u)| l > u);
        Ok(Self {
            lower,
            upper,
            empty,
        })
    }

    pub fn from_center_radius(center: &[f64], radius: &[f64]) -> Result<Self> {
        check_dim(center.len(), radius.len())?;
        let lower = center.iter().zip(radius).map(|(c, r)| c - r).collect();
        let upper = center.iter().zip(radius).map(|(c, r)| c + r).collect();
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u + l) / 2.0)
            .collect()
    }

    pub fn radius(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / 2.0)
            .collect()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, t: &[f64]) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(t)
            .map(|((l, u), s)| l + (u - l) * s)
            .collect()
    }

    /// Returns a copy with the bounds of coordinate `i` replaced.
    pub fn with_bounds(&self, i: usize, lower: f64, upper: f64) -> Self {
        let mut out = self.clone();
        out.lower[i] = lower;
        out.upper[i] = upper;
        out.empty = out.lower.iter().zip(&out.upper).any(|(l, u)| l > u);
        out
    }

    pub(crate) fn from_raw(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let empty = lower.iter().zip(&upper).any(|(l, u)| l > u);
        Self {
            lower,
            upper,
            empty,
        }
    }
}

/// Halfspace `g . x + h <= 0` over the input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub g: Vec<f64>,
    pub h: f64,
}

impl LinearConstraint {
    pub fn new(g: Vec<f64>, h: f64) -> Self {
        Self { g, h }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        dot(&self.g, x) + self.h
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        self.residual(x) <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    /// No point of the box satisfies the constraint.
    Infeasible,
    /// Every point of the box satisfies the constraint.
    Redundant,
    Active,
}

/// Extremum of `a . x + c` over the box: `a . center -/+ |a| . radius + c`.
pub fn concretize(a: &[f64], c: f64, domain: &BoxDomain, direction: Direction) -> Result<f64> {
    check_dim(domain.dim(), a.len())?;
    if domain.is_empty() {
        return Err(Error::EmptyBox);
    }
    Ok(concretize_unchecked(
        a,
        c,
        domain.lower(),
        domain.upper(),
        direction,
    ))
}

/// Same as [`concretize`] on raw bounds, without validation.
pub(crate) fn concretize_unchecked(
    a: &[f64],
    c: f64,
    lower: &[f64],
    upper: &[f64],
    direction: Direction,
) -> f64 {
    let mut center_term = 0.0;
    let mut radius_term = 0.0;
    for ((ai, l), u) in a.iter().zip(lower).zip(upper) {
        center_term += ai * (u + l) / 2.0;
        radius_term += ai.abs() * (u - l) / 2.0;
    }
    match direction {
        Direction::Min => center_term - radius_term + c,
        Direction::Max => center_term + radius_term + c,
    }
}

/// Classifies a constraint against a box by the range of `g . x + h` over it.
pub fn classify_constraint(
    domain: &BoxDomain,
    cons: &LinearConstraint,
) -> Result<FeasibilityStatus> {
    let lo = concretize(&cons.g, cons.h, domain, Direction::Min)?;
    if lo > 0.0 {
        return Ok(FeasibilityStatus::Infeasible);
    }
    let hi = concretize_unchecked(
        &cons.g,
        cons.h,
        domain.lower(),
        domain.upper(),
        Direction::Max,
    );
    if hi <= 0.0 {
        Ok(FeasibilityStatus::Redundant)
    } else {
        Ok(FeasibilityStatus::Active)
    }
}

/// Euclidean distance from the box center to the hyperplane `g . x + h = 0`.
pub fn centroid_distance(domain: &BoxDomain, cons: &LinearConstraint) -> Result<f64> {
    check_dim(domain.dim(), cons.dim())?;
    let norm = cons.g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNormal);
    }
    Ok(cons.residual(&domain.center()).abs() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> BoxDomain {
        BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    /// Brute-force extremum over all 2^n vertices.
    fn vertex_extremum(a: &[f64], c: f64, b: &BoxDomain, dir: Direction) -> f64 {
        let n = b.dim();
        let mut best = match dir {
            Direction::Min => f64::INFINITY,
            Direction::Max => f64::NEG_INFINITY,
        };
        for mask in 0..(1u32 << n) {
            let v: f64 = (0..n)
                .map(|i| {
                    let x = if mask & (1 << i) != 0 {
                        b.upper()[i]
                    } else {
                        b.lower()[i]
                    };
                    a[i] * x
                })
                .sum::<f64>()
                + c;
            best = match dir {
                Direction::Min => best.min(v),
                Direction::Max => best.max(v),
            };
        }
        best
    }

    #[test]
    fn toy_first_neuron_range() {
        let b = BoxDomain::from_center_radius(&[0.5, -0.5], &[1.5, 1.5]).unwrap();
        assert_eq!(b.lower(), &[-1.0, -2.0]);
        assert_eq!(b.upper(), &[2.0, 1.0]);
        let lo = concretize(&[1.0, -7.0], 6.0, &b, Direction::Min).unwrap();
        let hi = concretize(&[1.0, -7.0], 6.0, &b, Direction::Max).unwrap();
        assert!((lo + 2.0).abs() < 1e-12);
        assert!((hi - 22.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function() {
        let b = BoxDomain::new(vec![-3.0, 2.0], vec![4.0, 9.0]).unwrap();
        assert_eq!(
            concretize(&[0.0, 0.0], 5.0, &b, Direction::Min).unwrap(),
            5.0
        );
    }

    #[test]
    fn errors() {
        let b = unit_square();
        assert!(matches!(
            concretize(&[1.0], 0.0, &b, Direction::Min),
            Err(Error::DimensionMismatch { .. })
        ));
        let empty = BoxDomain::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(
            concretize(&[1.0, 1.0], 0.0, &empty, Direction::Min),
            Err(Error::EmptyBox)
        );
        assert!(BoxDomain::new(vec![], vec![]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn classification_examples() {
        let b = unit_square();
        let c = |g: Vec<f64>, h| classify_constraint(&b, &LinearConstraint::new(g, h)).unwrap();
        assert_eq!(c(vec![1.0, 1.0], 3.0), FeasibilityStatus::Infeasible);
        assert_eq!(c(vec![1.0, 1.0], -3.0), FeasibilityStatus::Redundant);
        assert_eq!(c(vec![1.0, -1.0], 0.0), FeasibilityStatus::Active);
        assert_eq!(c(vec![0.0, 0.0], 0.0), FeasibilityStatus::Redundant);
        assert_eq!(c(vec![0.0, 0.0], 1e-3), FeasibilityStatus::Infeasible);
    }

    #[test]
    fn centroid_distance_examples() {
        let b = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let d = |g: Vec<f64>, h| centroid_distance(&b, &LinearConstraint::new(g, h));
        assert_eq!(d(vec![1.0, 0.0], -1.0).unwrap(), 0.0);
        assert_eq!(d(vec![0.0, 1.0], -3.0).unwrap(), 2.0);
        assert_eq!(d(vec![0.0, 0.0], 1.0), Err(Error::ZeroNormal));
    }

    #[test]
    fn degenerate_radius_allowed() {
        let b = BoxDomain::new(vec![1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(!b.is_empty());
        assert_eq!(
            concretize(&[3.0, 1.0], 0.0, &b, Direction::Min).unwrap(),
            3.0
        );
    }

    fn arb_box(n: usize) -> impl Strategy<Value = BoxDomain> {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(0.0..3.0f64, n),
        )
            .prop_map(|(c, r)| BoxDomain::from_center_radius(&c, &r).unwrap())
    }

    proptest! {
        #[test]
        fn concretize_matches_vertices(
            (b, a, c) in (1usize..=10).prop_flat_map(|n| (
                arb_box(n),
                prop::collection::vec(-4.0..4.0f64, n),
                -3.0..3.0f64,
            ))
        ) {
            for dir in [Direction::Min, Direction::Max] {
                let v = concretize(&a, c, &b, dir).unwrap();
                let brute = vertex_extremum(&a, c, &b, dir);
                prop_assert!((v - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
            }
        }

        #[test]
        fn concretize_sandwiches_samples(
            (b, a, c, ts) in (1usize..=6).prop_flat_map(|n| (
                arb_box(n),
                prop::collection::vec(-4.0..4.0f64, n),
                -3.0..3.0f64,
                prop::collection::vec(prop::collection::vec(0.0..=1.0f64, n), 50),
            ))
        ) {
            let lo = concretize(&a, c, &b, Direction::Min).unwrap();
            let hi = concretize(&a, c, &b, Direction::Max).unwrap();
            for t in &ts {
                let x = b.from_unit(t);
                let v = dot(&a, &x) + c;
                prop_assert!(lo <= v + 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn classification_agrees_with_samples(
            (b, g, h, ts) in (1usize..=5).prop_flat_map(|n| (
                arb_box(n),
                prop::collection::vec(-2.0..2.0f64, n),
                -4.0..4.0f64,
                prop::collection::vec(prop::collection::vec(0.0..=1.0f64, n), 40),
            ))
        ) {
            let cons = LinearConstraint::new(g, h);
            let status = classify_constraint(&b, &cons).unwrap();
            for t in &ts {
                let x = b.from_unit(t);
                match status {
                    FeasibilityStatus::Infeasible => prop_assert!(!cons.is_satisfied(&x, 0.0)),
                    FeasibilityStatus::Redundant => prop_assert!(cons.is_satisfied(&x, 1e-12)),
                    FeasibilityStatus::Active => {}
                }
            }
        }

        #[test]
        fn centroid_distance_scale_invariant(
            (b, g, h, k) in (1usize..=5).prop_flat_map(|n| (
                arb_box(n),
                prop::collection::vec(0.1..2.0f64, n),
                -4.0..4.0f64,
                0.01..100.0f64,
            ))
        ) {
            let d1 = centroid_distance(&b, &LinearConstraint::new(g.clone(), h)).unwrap();
            let scaled = LinearConstraint::new(g.iter().map(|v| v * k).collect(), h * k);
            let d2 = centroid_distance(&b, &scaled).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-9 * (1.0 + d1));
        }

        #[test]
        fn center_radius_round_trip(b in (1usize..6).prop_flat_map(arb_box)) {
            let back = BoxDomain::from_center_radius(&b.center(), &b.radius()).unwrap();
            for i in 0..b.dim() {
                prop_assert!((back.lower()[i] - b.lower()[i]).abs() <= 1e-12);
                prop_assert!((back.upper()[i] - b.upper()[i]).abs() <= 1e-12);
            }
        }
    }
}
