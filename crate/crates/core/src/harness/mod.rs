//! Scenarios, verification suites, explicit-constant tracking and reports.

mod instance;
mod report;
mod run;
mod scenario;
mod suites;
mod tracker;

pub use instance::Instance;
pub use report::{RunReport, Status, Term, TrackedStep, VerificationReport, Witness};
pub use run::{constant_table, run_scenario};
pub use scenario::{AInfinityThreshold, CancellationSampling, Scenario, SuiteName, Tolerances};
pub use suites::{
    run_suite, verify_cancellation, verify_factorial_chain_1d, verify_full_control, verify_t1_equivalence,
    verify_tp_control, Context,
};
pub use tracker::{
    decomposition_count, explicit_constant, off_support_factor, tp_bound, ExplicitConstant, TpBound, TpLevel,
};
