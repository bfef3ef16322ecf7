//! Reference instances: the two-neuron toy network and seeded random networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::BoxDomain;
use crate::linalg::Matrix;
use crate::network::{canonicalize, AffineLayer, CanonicalProblem, NetworkModel, PropertySpec};

/// `f(x) = relu(x1 - 7 x2 + 6) - relu(5 x1 - x2 - 7)`.
pub fn toy_model() -> NetworkModel {
    NetworkModel::new(vec![
        AffineLayer::new(
            Matrix::from_rows(vec![vec![1.0, -7.0], vec![5.0, -1.0]]).unwrap(),
            vec![6.0, -7.0],
        )
        .unwrap(),
        AffineLayer::new(Matrix::from_rows(vec![vec![1.0, -1.0]]).unwrap(), vec![0.0]).unwrap(),
    ])
    .unwrap()
}

/// Box with center `[0.5, -0.5]` and radius `[1.5, 1.5]`.
pub fn toy_box() -> BoxDomain {
    BoxDomain::from_center_radius(&[0.5, -0.5], &[1.5, 1.5]).unwrap()
}

/// `f(x) >= 0` over [`toy_box`].
pub fn toy_property() -> PropertySpec {
    PropertySpec::new(toy_box(), Matrix::identity(1), vec![0.0]).unwrap()
}

pub fn toy_problem() -> CanonicalProblem {
    canonicalize(&toy_model(), &toy_property()).unwrap()
}

/// Random dense network with the given layer widths (input first).
///
/// Weights are uniform in `[-1, 1]` scaled by `1/sqrt(fan_in)`, biases uniform in `[-0.5, 0.5]`.
pub fn random_network(seed: u64, widths: &[usize]) -> NetworkModel {
    assert!(
        widths.len() >= 2,
        "need at least an input and an output width"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let rows = (0..fan_out)
                .map(|_| {
                    (0..fan_in)
                        .map(|_| rng.random_range(-1.0..1.0) * scale)
                        .collect()
                })
                .collect();
            let bias = (0..fan_out).map(|_| rng.random_range(-0.5..0.5)).collect();
            AffineLayer::new(Matrix::from_rows(rows).unwrap(), bias).unwrap()
        })
        .collect();
    NetworkModel::new(layers).unwrap()
}

/// Random network whose single output is shifted by `offset` (added to the output bias).
pub fn shift_output(model: &NetworkModel, offset: f64) -> NetworkModel {
    let mut layers = model.layers().to_vec();
    let last = layers.last_mut().expect("non-empty");
    for b in &mut last.bias {
        *b += offset;
    }
    NetworkModel::new(layers).unwrap()
}
