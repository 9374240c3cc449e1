//! Stable roommates under uniformly random preferences.
//!
//! Preferences come from an `n × n` array of i.i.d. uniform utilities, lower
//! meaning more preferred. The crate provides instance generation, matching
//! machinery, Irving's algorithm and exhaustive enumeration, exact counts of
//! cycle configurations, importance-sampling estimators for the expected
//! number of stable matchings and its conditional two-point structure, the
//! optimized decay exponent `t★`, and a reproducible experiment harness.

pub mod bound_optimizer;
pub mod combinatorics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod instances;
pub mod matchings;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use instances::{PreferenceProfile, UtilityMatrix};
pub use matchings::{CycleDecomposition, Matching};
pub use rng::RngStream;
pub use solvers::{irving_solve, Outcome, SolveResult};
