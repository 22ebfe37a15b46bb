//! Dense realizations of truncated operators and their norms.

mod matrix;
mod norm;

pub use matrix::{default_window, OperatorMatrix, DEFAULT_BUDGET};
pub use norm::{operator_norm, operator_norm_dense, NormEstimate};
