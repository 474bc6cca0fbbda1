//! Two-sample variable selection for multivariate time series.
//!
//! Given two equal-shape series `X, Y ∈ R^{D×T}`, the pipeline splits the
//! time axis into buckets, treats the points inside each bucket as
//! exchangeable samples, selects the variables on which the two samples
//! differ (MMD-based or marginal-distance-based selectors), and reports a
//! permutation-test p-value per bucket computed on held-out points.
//!
//! The crate is `no_std`-compatible (requires `alloc`); file formats and
//! the command line live in the companion `tsvarsel` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod kernel;
pub mod matrix;
pub mod mmd;
pub mod optimize;
mod par;
pub mod plan;
pub mod report;
pub mod rng;
pub mod select;
pub mod series;
pub mod stats;
pub mod synth;
pub mod timeslice;
pub mod trajectory;

pub use error::Error;
pub use kernel::{ArdKernelParams, LengthScaleMode};
pub use matrix::Matrix;
pub use mmd::MmdStats;
pub use optimize::{OptimizeConfig, OptimizeOutcome, StopReason};
pub use plan::{BucketPlan, BucketSplit};
pub use report::{MethodId, RunReport, SelectionResult, WeightVector};
pub use select::{LambdaSearchSpace, Selection};
pub use series::TimeSeriesPair;
pub use stats::{PermutationTestConfig, ProjectionCount};
pub use timeslice::{run_pipeline, GammaMode, Method, PipelineConfig};
pub use trajectory::TrajectoryPair;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
