//! Wavelet sieve profile estimation for the single-index regression model
//! `Y = f(X^T theta*) + eps`, with alternating maximization, profile
//! inference, projection pursuit and a Monte Carlo harness.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod pursuit;
pub mod sphere;
pub mod wavelet;

pub use error::{Error, Result};
