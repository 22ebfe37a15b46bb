//! Dyadic cubes, rectangle decompositions and monomial-recovery identities.

mod cube;
mod decompose;
mod family;
mod monomial;

pub use cube::{boundary_collections, for_each_in_ranges, generation_children, Corner, DyadicCube, LatticeCube};
pub use decompose::{
    complementary_decomposition, decompose_rectangle, refinement_depth, Decomposition, DyadicRational,
    SlabRectangle,
};
pub use family::{FamilySpec, MAX_FAMILY};
pub use monomial::{
    monomial_identity_rhs, monomial_recovery_error, multiindices_below, multiindices_of_degree, Anchor,
    Monomial, MultiIndex, Quadrature,
};
pub(crate) use cube::dyadic_scale;
pub(crate) use monomial::eval_normalized;
