//! Certified upper and lower tail bounds for centered random variables.
//!
//! All distributions are handled in centered form `X = Y - E[Y]`. Upper-side
//! queries concern `P(X >= x)` and lower-side queries `P(X <= -x)`, always
//! with `x >= 0`.

pub mod error;
pub mod json;
pub mod optim;
pub mod rng;
pub mod specfun;

pub mod bound_result;
pub mod dist_model;
pub mod oracle;

pub mod dist_bounds;
pub mod engine_lower;
pub mod engine_upper;

pub mod extremes;
pub mod harness;
pub mod mixture;

pub use error::{Error, Result};
