//! Geo-indistinguishable release of location traces.
//!
//! Each query is either answered by a prediction from earlier reports,
//! after a private threshold test, or by fresh planar Laplace noise. Budget
//! managers choose the test and noise budgets per step and stop before the
//! total budget is exceeded.

pub mod budget;
pub mod config;
pub mod error;
pub mod eval;
pub mod mechanism;
pub mod noise;
pub mod rng;
pub mod traces;

pub use error::{Error, Result};
