//! Empirical-likelihood inference for multiple samples under the density
//! ratio model.

pub mod del;
pub mod distributions;
pub mod error;
pub mod estimate;
pub mod family;
pub mod hypothesis;
pub mod infer;
pub mod io;
pub mod linalg;
pub mod model;
pub mod power;
pub mod quadrature;
pub mod seeding;
pub mod sim;

pub use error::{Error, Result};
