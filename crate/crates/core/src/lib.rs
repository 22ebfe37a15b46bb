//! Numerical testbench for two-weight norm inequalities of fractional
//! Calderón–Zygmund operators on exact discrete measures.

pub mod constants;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod measures;
pub mod operators;

pub use error::{CzError, Result};

// The book chapters double as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/constants.md")]
    mod constants {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
