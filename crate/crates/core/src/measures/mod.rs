//! Exact discrete measures on dyadic lattices, generators and diagnostics.

mod generators;
mod measure;
mod profiles;

pub use generators::{
    coarsen, generate_doubling_measure, mixture_measure, power_weight_measure, Atom, MeasureSpec,
};
pub use measure::{quantize, DiscreteMeasure, MAX_CELLS, MAX_TOTAL, UNIT};
pub use profiles::{
    a_infinity_profile, boundary_mass_check, doubling_profile, AInfinityProfile, BoundaryMass, DoublingProfile,
    ExactRatio,
};
pub(crate) use measure::MASS_PER_COUNT;
