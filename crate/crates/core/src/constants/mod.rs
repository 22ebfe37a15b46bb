//! Muckenhoupt, one-tailed, κ-testing, bilinear indicator and cancellation
//! constants, evaluated exactly on discrete measure pairs over cube families.

mod bict;
mod cancellation;
mod muckenhoupt;
mod report;
mod testing;

pub use bict::{bict, bict_exhaustive_on_cube, bict_on_cube, BictOutcome, EXHAUSTIVE_CELLS};
pub use cancellation::{ball_count, ball_samples, cancellation_constant, cancellation_on_ball, inner_integral};
pub use muckenhoupt::{
    a2_on_cube, muckenhoupt_a2, one_tailed_a2, one_tailed_a2_with_tail, one_tailed_on_cube, poisson_integral,
    uniform_tail_1d, Tail,
};
pub use report::{Argmax, BallSample, ConstantReport, CubeFamily, FamilyDescriptor};
pub use testing::{
    kappa_testing, replay_testing, testing_on_cube, testing_sweep, CubeTesting, TestingOptions, TestingSweep,
};
