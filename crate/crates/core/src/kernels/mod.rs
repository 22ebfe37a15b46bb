//! Fractional Calderón–Zygmund kernels, truncation windows, smoothness and
//! ellipticity checks.

mod ellipticity;
mod kernel;
mod smoothness;
mod window;

pub use ellipticity::{ellipticity_margin, orthant_directions, EllipticityMargin};
pub use kernel::{KernelConfig, KernelFn, KernelName, KernelSpec};
pub use smoothness::{sample_pairs, verify_smoothness, SamplePair, SmoothnessReport};
pub use window::{TruncationWindow, WindowShape};
pub(crate) use kernel::dist;
