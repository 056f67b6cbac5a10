//! Oblivious single-source buy-at-bulk network design.
//!
//! Given an instance, [`framework::solve_oblivious`] computes a distribution
//! over at most `1 + log D` trees whose expected cost is within a measured
//! factor of optimal for every concave aggregation function at once.

pub mod aggregation;
pub mod error;
pub mod exact;
pub mod framework;
pub mod gmm;
pub mod graph;
pub mod instance;
pub mod pipes;
pub mod rational;
pub mod regularize;
pub mod simplex;
pub mod subroutines;

pub use error::{Error, Result};
