//! Reservoir sliced Wasserstein estimation.
//!
//! The sliced Wasserstein distance compares two point clouds by projecting
//! them onto random unit directions and averaging the 1-D optimal transport
//! cost along each direction. Plain Monte Carlo slicing draws a fresh set of
//! directions at every optimisation step, which makes its gradients noisy.
//!
//! This crate keeps a persistent *reservoir* of directions between steps.
//! Each step a few fresh directions join the reservoir, every candidate is
//! keyed by weighted reservoir sampling on its current transport cost, and
//! the survivors form a self-normalised importance estimate of the sliced
//! cost. When the importance weights degenerate the reservoir is flushed.
//!
//! Modules:
//!
//! - [`numeric`]: sample sets, seeded randomness, sphere sampling, projection
//! - [`wasserstein1d`]: exact sorted 1-D costs and their gradients
//! - [`reservoir`]: the weighted reservoir state machine
//! - [`estimator`]: the plain and reservoir sliced estimators
//! - [`optimize`]: particle matching and parametric fitting with SGD/Adam
//! - [`color`]: a differentiable ASC CDL pipeline matched in CIELAB
//! - [`harness`]: the synthetic distribution-matching benchmark

pub mod color;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod numeric;
pub mod optimize;
pub mod reservoir;
pub mod wasserstein1d;

pub use error::{Error, Result};
pub use estimator::{reswd_step, swd_estimate, EstimateResult, Estimator, Reswd, ReswdConfig, Swd};
pub use numeric::{project, sample_directions, Direction, RngState, SampleSet};
pub use optimize::{
    fit_transform, match_particles, AdamState, MatchReport, Mode, OptimizerKind,
    ParametricTransform, StepRecord,
};
pub use reservoir::{Candidate, Reservoir, ReservoirEntry, SelectionResult};
pub use wasserstein1d::{equalize_lengths, w1d_cost, w_p_distance, SlicedCost};
