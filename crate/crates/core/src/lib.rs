//! Smoothed estimating equations for instrumental-variables quantile regression.

pub mod bandwidth;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod instruments;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod optim;
pub mod probdist;
pub mod quadrature;

pub use error::{Result, SeeError};
