//! Joint input-state estimation for linear structures.
//!
//! * [`model`]: shear-frame assembly, modal reduction, discretization and
//!   sensor output matrices.
//! * [`sim`]: excitation scenarios, truth simulation and noisy measurements.
//! * [`estimators`]: universal filter, universal smoother and an augmented
//!   Kalman filter baseline.
//! * [`tuner`]: filter-array selection of the process-noise level.
//! * [`eval`]: NRMSE scoring, covariance diagnostics and comparison reports.
//! * [`config`], [`io`], [`cli`]: run configuration, channel files and the
//!   subcommands behind the `ufus` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod tuner;

pub use error::{Error, Result};
pub use linalg::range_basis;
