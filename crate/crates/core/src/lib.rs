//! Simulation and numerical checks for Poisson process approximation of
//! stabilizing functionals of Poisson and binomial point processes on the
//! flat torus.

pub mod cli;
pub mod discrepancy;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod mc;
pub mod pointproc;
pub mod quadrature;
pub mod stein;
pub mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
