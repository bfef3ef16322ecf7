//! Backward linear bound propagation (CROWN) for ReLU networks.
//!
//! For every layer `i` the backward pass produces affine planes
//! `A_lo x + c_lo <= z_i(x) <= A_up x + c_up` valid on the input box, which
//! are then concretized into pre-activation intervals. Unstable ReLUs are
//! relaxed with the triangle (Planet) upper bound and a slope-`alpha` lower
//! bound; neurons fixed by a split assignment are replaced by their exact
//! linear piece.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{concretize_unchecked, BoxDomain, Direction};
use crate::linalg::Matrix;
use crate::network::NetworkModel;

/// Width below which an interval straddling zero is treated as stable.
const DEGENERATE_WIDTH: f64 = 1e-12;

/// Pre-activation interval of every neuron in one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LayerBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        debug_assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Shrinks every interval to its intersection with `other`.
    pub fn intersect(&mut self, other: &LayerBounds) {
        for (l, o) in self.lower.iter_mut().zip(&other.lower) {
            *l = l.max(*o);
        }
        for (u, o) in self.upper.iter_mut().zip(&other.upper) {
            *u = u.min(*o);
        }
    }

    /// First neuron whose interval is empty.
    pub fn first_crossing(&self) -> Option<usize> {
        self.lower.iter().zip(&self.upper).position(|(l, u)| l > u)
    }

    /// True when `self` lies inside `outer` up to `tol`.
    pub fn is_within(&self, outer: &LayerBounds, tol: f64) -> bool {
        self.lower
            .iter()
            .zip(&outer.lower)
            .all(|(a, b)| *a >= b - tol)
            && self
                .upper
                .iter()
                .zip(&outer.upper)
                .all(|(a, b)| *a <= b + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// `z >= s`
    Active,
    /// `z <= s`
    Inactive,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Active => Polarity::Inactive,
            Polarity::Inactive => Polarity::Active,
        }
    }
}

/// Fixes neuron `neuron` of ReLU layer `layer` to one side of `split_point`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub layer: usize,
    pub neuron: usize,
    pub polarity: Polarity,
    pub split_point: f64,
}

impl SplitAssignment {
    pub fn relu(layer: usize, neuron: usize, polarity: Polarity) -> Self {
        Self {
            layer,
            neuron,
            polarity,
            split_point: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaPolicy {
    Fixed(f64),
    /// Slope 1 when `u >= -l`, else 0.
    Adaptive,
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        AlphaPolicy::Fixed(1.0)
    }
}

impl AlphaPolicy {
    fn slope(self, l: f64, u: f64) -> f64 {
        match self {
            AlphaPolicy::Fixed(a) => a.clamp(0.0, 1.0),
            AlphaPolicy::Adaptive => {
                if u >= -l {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityKind {
    StableActive,
    StableInactive,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronStatus {
    pub kind: StabilityKind,
    /// Largest vertical gap between the upper and lower relaxation on `[l, u]`.
    pub gap: f64,
}

/// Linear relaxation `lower_slope z + lower_offset <= relu(z) <= upper_slope z + upper_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluRelaxation {
    pub lower_slope: Vec<f64>,
    pub lower_offset: Vec<f64>,
    pub upper_slope: Vec<f64>,
    pub upper_offset: Vec<f64>,
}

/// Affine lower and upper planes of a layer's pre-activations w.r.t. the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingPlanes {
    pub lower_a: Matrix,
    pub lower_c: Vec<f64>,
    pub upper_a: Matrix,
    pub upper_c: Vec<f64>,
}

impl BoundingPlanes {
    pub fn lower_row(&self, j: usize) -> (&[f64], f64) {
        (self.lower_a.row(j), self.lower_c[j])
    }

    pub fn upper_row(&self, j: usize) -> (&[f64], f64) {
        (self.upper_a.row(j), self.upper_c[j])
    }
}

/// Everything a bounding pass produces for one subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    /// Pre-activation intervals, one entry per affine layer (the last one is the output).
    pub bounds: Vec<LayerBounds>,
    pub planes: Vec<BoundingPlanes>,
    /// Mean over objective rows of the backward coefficient on each ReLU output,
    /// taken from the output layer's lower-bound pass.
    pub coeff_means: Vec<Vec<f64>>,
}

impl BoundResult {
    pub fn final_lower(&self) -> &[f64] {
        &self.bounds.last().expect("non-empty").lower
    }

    pub fn final_planes(&self) -> &BoundingPlanes {
        self.planes.last().expect("non-empty")
    }

    /// Worst lower bound over objective rows.
    pub fn worst_lower(&self) -> f64 {
        self.final_lower()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hidden_bounds(&self) -> &[LayerBounds] {
        &self.bounds[..self.bounds.len() - 1]
    }
}

fn classify_interval(l: f64, u: f64) -> StabilityKind {
    if l >= 0.0 {
        StabilityKind::StableActive
    } else if u <= 0.0 {
        StabilityKind::StableInactive
    } else if u - l < DEGENERATE_WIDTH {
        if u > 0.0 {
            StabilityKind::StableActive
        } else {
            StabilityKind::StableInactive
        }
    } else {
        StabilityKind::Unstable
    }
}

pub fn classify_neurons(bounds: &LayerBounds) -> Vec<NeuronStatus> {
    bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(&l, &u)| {
            let kind = classify_interval(l, u);
            let gap = match kind {
                StabilityKind::Unstable => -u * l / (u - l),
                _ => 0.0,
            };
            NeuronStatus { kind, gap }
        })
        .collect()
}

/// Relaxes one ReLU layer given its pre-activation bounds and forced assignments.
///
/// `layer` is only used to label an [`Error::InfeasibleSplit`].
pub fn relax_relu(
    bounds: &LayerBounds,
    policy: AlphaPolicy,
    forced: &[(usize, Polarity)],
    layer: usize,
) -> Result<ReluRelaxation> {
    let n = bounds.len();
    let mut forced_at = vec![None; n];
    for &(j, p) in forced {
        forced_at[j] = Some(p);
    }
    let mut relax = ReluRelaxation {
        lower_slope: vec![0.0; n],
        lower_offset: vec![0.0; n],
        upper_slope: vec![0.0; n],
        upper_offset: vec![0.0; n],
    };
    for j in 0..n {
        let (l, u) = (bounds.lower[j], bounds.upper[j]);
        let kind = classify_interval(l, u);
        let effective = match (forced_at[j], kind) {
            (Some(Polarity::Inactive), _) if l > 0.0 => {
                return Err(Error::InfeasibleSplit { layer, neuron: j })
            }
            (Some(Polarity::Active), _) if u < 0.0 => {
                return Err(Error::InfeasibleSplit { layer, neuron: j })
            }
            (Some(Polarity::Inactive), _) => StabilityKind::StableInactive,
            (Some(Polarity::Active), _) => StabilityKind::StableActive,
            (None, k) => k,
        };
        match effective {
            StabilityKind::StableActive => {
                relax.lower_slope[j] = 1.0;
                relax.upper_slope[j] = 1.0;
            }
            StabilityKind::StableInactive => {}
            StabilityKind::Unstable => {
                let slope = u / (u - l);
                relax.upper_slope[j] = slope;
                relax.upper_offset[j] = -slope * l;
                relax.lower_slope[j] = policy.slope(l, u);
            }
        }
    }
    Ok(relax)
}

/// Backward pass producing the planes of `target_layer`.
///
/// `relaxations[k]` relaxes the ReLU after layer `k`; entries `0..target_layer` are used.
pub fn backward_bound(
    model: &NetworkModel,
    relaxations: &[ReluRelaxation],
    target_layer: usize,
) -> BoundingPlanes {
    let (lower_a, lower_c, _) = backward_pass(model, relaxations, target_layer, Side::Lower, false);
    let (upper_a, upper_c, _) = backward_pass(model, relaxations, target_layer, Side::Upper, false);
    BoundingPlanes {
        lower_a,
        lower_c,
        upper_a,
        upper_c,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// Returns the input-space plane `(A, c)` and, when `trace` is set, the per-layer
/// means of the coefficients multiplying each ReLU output.
fn backward_pass(
    model: &NetworkModel,
    relaxations: &[ReluRelaxation],
    target: usize,
    side: Side,
    trace: bool,
) -> (Matrix, Vec<f64>, Vec<Vec<f64>>) {
    let layers = model.layers();
    let rows = layers[target].out_dim();
    // `lambda` holds the coefficients on the current layer's output.
    let mut lambda = Matrix::identity(rows);
    let mut constant = vec![0.0; rows];
    let mut means = vec![Vec::new(); target];
    for k in (0..=target).rev() {
        let layer = &layers[k];
        for (r, c) in constant.iter_mut().enumerate() {
            *c += crate::linalg::dot(lambda.row(r), &layer.bias);
        }
        lambda = lambda.matmul(&layer.weights);
        if k == 0 {
            break;
        }
        // lambda now multiplies relu(z_{k-1}); replace it by its relaxation.
        let relax = &relaxations[k - 1];
        if trace {
            let width = lambda.cols();
            means[k - 1] = (0..width)
                .map(|j| (0..rows).map(|r| lambda[(r, j)]).sum::<f64>() / rows as f64)
                .collect();
        }
        for r in 0..rows {
            let row = lambda.row_mut(r);
            for (j, coef) in row.iter_mut().enumerate() {
                let use_lower = (*coef >= 0.0) == (side == Side::Lower);
                let (slope, offset) = if use_lower {
                    (relax.lower_slope[j], relax.lower_offset[j])
                } else {
                    (relax.upper_slope[j], relax.upper_offset[j])
                };
                constant[r] += *coef * offset;
                *coef *= slope;
            }
        }
    }
    (lambda, constant, means)
}

/// Layer-by-layer bounding pass over `domain`.
pub fn compute_bounds(
    model: &NetworkModel,
    domain: &BoxDomain,
    policy: AlphaPolicy,
    splits: &[SplitAssignment],
    overrides: Option<&[LayerBounds]>,
) -> Result<BoundResult> {
    compute_bounds_with(model, domain, policy, splits, overrides, |_, _, _| Ok(()))
}

/// [`compute_bounds`] with a hook that may tighten each layer's intervals right
/// after they are concretized, before the layer is relaxed. Tightened intervals
/// feed the relaxations of all later layers in the same pass.
pub fn compute_bounds_with<F>(
    model: &NetworkModel,
    domain: &BoxDomain,
    policy: AlphaPolicy,
    splits: &[SplitAssignment],
    overrides: Option<&[LayerBounds]>,
    mut refine: F,
) -> Result<BoundResult>
where
    F: FnMut(usize, &BoundingPlanes, &mut LayerBounds) -> Result<()>,
{
    crate::error::check_dim(model.input_dim(), domain.dim())?;
    if domain.is_empty() {
        return Err(Error::EmptyBox);
    }
    let n_layers = model.num_layers();
    let mut forced: Vec<Vec<(usize, Polarity)>> = vec![Vec::new(); n_layers.saturating_sub(1)];
    for s in splits {
        if s.split_point != 0.0 {
            return Err(Error::UnsupportedSplitPoint(s.split_point));
        }
        if s.layer + 1 >= n_layers || s.neuron >= model.layers()[s.layer].out_dim() {
            return Err(Error::CannotBranch(format!(
                "split on layer {} neuron {} does not name a ReLU",
                s.layer, s.neuron
            )));
        }
        forced[s.layer].push((s.neuron, s.polarity));
    }

    let (lo, hi) = (domain.lower(), domain.upper());
    let mut relaxations = Vec::with_capacity(n_layers - 1);
    let mut all_bounds = Vec::with_capacity(n_layers);
    let mut all_planes = Vec::with_capacity(n_layers);
    let mut coeff_means = Vec::new();
    for i in 0..n_layers {
        let last = i + 1 == n_layers;
        let (lower_a, lower_c, means) = backward_pass(model, &relaxations, i, Side::Lower, last);
        let (upper_a, upper_c, _) = backward_pass(model, &relaxations, i, Side::Upper, false);
        let planes = BoundingPlanes {
            lower_a,
            lower_c,
            upper_a,
            upper_c,
        };
        let width = planes.lower_c.len();
        let mut bounds = LayerBounds::new(
            (0..width)
                .map(|j| {
                    let (a, c) = planes.lower_row(j);
                    concretize_unchecked(a, c, lo, hi, Direction::Min)
                })
                .collect(),
            (0..width)
                .map(|j| {
                    let (a, c) = planes.upper_row(j);
                    concretize_unchecked(a, c, lo, hi, Direction::Max)
                })
                .collect(),
        );
        if let Some(ov) = overrides.and_then(|o| o.get(i)) {
            bounds.intersect(ov);
        }
        refine(i, &planes, &mut bounds)?;
        if let Some(j) = bounds.first_crossing() {
            return Err(Error::InfeasibleSplit {
                layer: i,
                neuron: j,
            });
        }
        if !last {
            relaxations.push(relax_relu(&bounds, policy, &forced[i], i)?);
        } else {
            coeff_means = means;
        }
        all_bounds.push(bounds);
        all_planes.push(planes);
    }
    Ok(BoundResult {
        bounds: all_bounds,
        planes: all_planes,
        coeff_means,
    })
}
