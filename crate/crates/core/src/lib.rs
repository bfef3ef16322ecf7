//! Bound propagation, constraint clipping and branch-and-bound verification for
//! fully connected ReLU networks.

#![allow(clippy::needless_range_loop)]

pub mod bab;
pub mod clipping;
pub mod crown;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod linalg;
pub mod network;
pub mod oracle;

pub use bab::{verify, BabConfig, BranchMode, ClipMode, Verdict, VerificationOutcome};
pub use crown::{
    compute_bounds, compute_bounds_with, AlphaPolicy, BoundResult, BoundingPlanes, LayerBounds,
    Polarity, SplitAssignment,
};
pub use error::{Error, Result};
pub use geometry::{BoxDomain, Direction, FeasibilityStatus, LinearConstraint};
pub use linalg::Matrix;
pub use network::{
    canonicalize, load_model, load_property, CanonicalProblem, NetworkModel, PropertySpec,
};
