//! Moving-window, locally stationary Gaussian-process mapping of scattered
//! spatio-temporal observations.

pub mod cli;
pub mod covariance;
pub mod error;
pub mod gp_gaussian;
pub mod gp_student;
pub mod ingest;
pub mod linalg;
pub mod optimize;
pub mod stats;
pub mod validation;
pub mod window;

pub use error::{Error, Result};
