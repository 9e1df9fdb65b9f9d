//! Gain-dissipative solvers for XY, Ising and q-state Potts spin
//! Hamiltonians, the baseline optimizers they are benchmarked against,
//! instance generators, and the experiment harness.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod gd;
pub mod instances;
pub mod model;

pub use error::{GdError, Result};
