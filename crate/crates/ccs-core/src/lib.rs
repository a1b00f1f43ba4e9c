//! Estimation under cross-classified sampling: two independent samples, one
//! per dimension of a rectangular population, observed on their Cartesian
//! product.
//!
//! The crate provides sampling designs and their inclusion probabilities
//! ([`design`]), Horvitz-Thompson totals and ratios ([`estimate`]), exact
//! design variances with their two-stage decompositions ([`exact`]),
//! sample-based variance estimators ([`varest`]), closed-form model biases
//! of the simplified estimators ([`bias`]), a superpopulation generator
//! ([`model`]), and a deterministic parallel replication harness
//! ([`montecarlo`]).

pub mod bias;
pub mod design;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod grid;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod varest;

pub use design::{CrossSample, DesignKind, DesignSpec, Stratum};
pub use error::{CcsError, Result};
pub use estimate::{ht_ratio, ht_total, RatioEstimate, SampleEstimate, SampleMatrix};
pub use exact::ExactVarianceReport;
pub use grid::PopulationGrid;
pub use model::ModelParams;
pub use montecarlo::{ExperimentSpec, PopSource, SimulationSummary};
pub use varest::VarEstimateReport;
