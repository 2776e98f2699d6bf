//! Self-similar profiles of Smoluchowski's coagulation equation for kernels of
//! homogeneity one, built by a contraction mapping in log-mass variables.
//!
//! [`fixedpoint::solve`] produces the log-coordinate profile `lambda`; [`profile`] maps it to
//! the mass density `g`, [`verify`] checks it, and [`nonexist`] holds the duality estimates
//! used against self-similar solutions with `b` close to 1.

// `!(a < b)` is used on purpose so that NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixedpoint;
pub mod grid;
pub mod integral_ops;
pub mod kernel;
pub mod nonexist;
pub mod profile;
mod quad;
pub mod verify;

pub use error::{Error, Result};
pub use fixedpoint::{lambda_bar, solve, SolveConfig, SolveReport};
pub use grid::{Field, LogGrid, Perturbation, Side, Tail};
pub use kernel::KernelSpec;
pub use profile::MassProfile;
