//! Compressible Navier–Stokes flow with a singular congestion pressure and a
//! heterogeneous maximal density `ρ*(x)`.

pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod pressure;
pub mod quadrature;
pub mod runner;
pub mod scenarios;
pub mod solver;

pub use error::{ConfigIssue, Error, Result};
