//! Coresets for Gaussian mixture models.
//!
//! A large weighted point set is compressed into a small weighted sample whose
//! mixture cost approximates the original for every semi-spherical mixture.
//! The pipeline is:
//!
//! 1. a k-means bicriteria approximation ([`seeding`]),
//! 2. per-point sensitivity upper bounds and importance sampling ([`coreset`]),
//! 3. weighted EM on the sample ([`gmm`]),
//!
//! with [`compose`] providing merge-and-compress composition for streaming and
//! partitioned construction, and [`eval`] the coreset-vs-uniform harness.

pub mod compose;
pub mod coreset;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod numeric;
pub mod rng;
pub mod seeding;

pub use compose::{CoresetTree, ParallelMode, TreeParams};
pub use coreset::{build_coreset, Coreset, CoresetMeta, CoresetParams, SeedingMode};
pub use dataset::{DataSet, PointSet};
pub use error::{Error, Result};
pub use gmm::{EmConfig, EmReport, GmmParams};
pub use seeding::Bicriteria;
