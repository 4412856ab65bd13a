//! Functional neural networks for classifying curves.
//!
//! - [`basis`]: Fourier, B-spline and Legendre bases, least-squares smoothing, derivatives
//! - [`quadrature`]: composite Simpson's rule and integral features
//! - [`fnn`]: the functional network, its training loop and functional-weight extraction
//! - [`baselines`]: penalized functional multinomial regression and the raw-grid network
//! - [`simgen`]: Karhunen-Loève curve generation and the three simulation scenarios
//! - [`eval`]: metrics, cross-validation, grid search and the replicate harness
//! - [`model`]: model specifications, fitted models and the versioned model file
//! - [`io`]: CSV datasets and run configuration files

pub mod baselines;
pub mod basis;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fnn;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod simgen;

pub use error::{Error, Result};
