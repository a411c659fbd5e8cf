//! Hayashi-Yoshida estimation of the quadratic covariation of two
//! asynchronously observed diffusions, with the pseudo-aggregation grid,
//! the exact error decomposition, quadratic covariations of times, and the
//! feasible asymptotic variance used for confidence intervals.

pub mod error;
pub mod estimators;
pub mod inference;
pub mod mc;
pub mod numeric;
pub mod sampling;
pub mod simulate;
pub mod sync;
pub mod timescales;

pub use error::{Error, Process, Result};
