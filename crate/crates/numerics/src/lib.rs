//! Native reference kernels for the leaf-level corpus: day length, co-limited
//! photosynthesis with Medlyn coupling, forward-mode differentiation and
//! single-parameter Vcmax estimation.
//!
//! These double as the numerical oracle for translated code and as the kernel
//! timed by the benchmark harness.

pub mod bench;
pub mod daylength;
pub mod dual;
pub mod error;
pub mod fit;
pub mod photosynthesis;
pub mod solver;
pub mod synthetic;

pub use bench::{bench_kernel, BenchOptions, BenchReport, BenchRun};
pub use daylength::{daylength, daylength_many, SECS_PER_RADIAN};
pub use dual::{Dual, Real};
pub use error::NumericsError;
pub use fit::{
    fit_gradient_descent, fit_uniform, mse_loss, FitMethod, FitResult, GdOptions, LeafObservation,
};
pub use photosynthesis::{assimilation, assimilation_with, PhotoParams};
pub use solver::{secant_step, solve_ci, solve_ci_dual, solve_ci_unrolled, SolveOutcome};
