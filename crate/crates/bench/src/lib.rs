//! Workloads shared by the benchmarks.

use clipverify_core::fixtures;
use clipverify_core::geometry::{concretize, BoxDomain, Direction, LinearConstraint};
use clipverify_core::network::{CanonicalProblem, NetworkModel};
use clipverify_core::oracle::exact_verify;

/// Unit box `[-1, 1]^n`.
pub fn unit_box(n: usize) -> BoxDomain {
    BoxDomain::new(vec![-1.0; n], vec![1.0; n]).unwrap()
}

/// Seeded dense network over `[-1, 1]^widths[0]`.
pub fn dense_problem(seed: u64, widths: &[usize]) -> (NetworkModel, CanonicalProblem) {
    let model = fixtures::random_network(seed, widths);
    let problem = CanonicalProblem::from_model(model.clone(), unit_box(widths[0])).unwrap();
    (model, problem)
}

/// Deterministic objective and `m` constraints in dimension `n`, each hyperplane cutting
/// the unit box somewhere between its extremes.
pub fn clip_instance(n: usize, m: usize) -> (Vec<f64>, BoxDomain, Vec<LinearConstraint>) {
    let b = unit_box(n);
    let wave = |k: usize, i: usize| ((k * 31 + i * 17) as f64 * 0.37).sin();
    let a = (0..n).map(|i| wave(0, i)).collect();
    let cons = (1..=m)
        .map(|k| {
            let g: Vec<f64> = (0..n).map(|i| wave(k, i)).collect();
            let lo = concretize(&g, 0.0, &b, Direction::Min).unwrap();
            let hi = concretize(&g, 0.0, &b, Direction::Max).unwrap();
            let frac = 0.3 + 0.4 * (k as f64 / m as f64);
            LinearConstraint::new(g, -(lo + (hi - lo) * frac))
        })
        .collect();
    (a, b, cons)
}

/// Single-output network shifted so its exact minimum over the unit box is `margin`.
pub fn margin_problem(seed: u64, widths: &[usize], margin: f64) -> CanonicalProblem {
    let (model, p) = dense_problem(seed, widths);
    let min = exact_verify(&p, &p.input_box, &[]).unwrap().min_value;
    CanonicalProblem::from_model(fixtures::shift_output(&model, margin - min), p.input_box).unwrap()
}
