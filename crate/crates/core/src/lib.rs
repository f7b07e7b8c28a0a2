//! Numerical laboratory for inner products on the reproducing Hilbert space of
//! fractional Brownian motion with Hurst index below one half, the tensor norm
//! of the exponential kernel `e^{-theta|t-s|}`, and Monte Carlo studies of the
//! drift estimators of the fractional Ornstein-Uhlenbeck process.

pub mod asymlab;
pub mod bvfunc;
pub mod cli;
pub mod error;
pub mod estim;
pub mod fbmsim;
pub mod hinner;
pub mod quad;
pub mod specfun;

pub use error::{Error, Result};
