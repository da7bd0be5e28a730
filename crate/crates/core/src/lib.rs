//! Generalized factor analysis of large cross-sections.
//!
//! A random sequence `y(k)` observed over a large cross-section is split
//! into a q-aggregate ("flocking") part `F x`, driven by a few factors with
//! diverging covariance eigenvalues, and an idiosyncratic residual whose
//! covariance stays bounded. The crate provides:
//!
//! * [`synthesis`]: ground-truth generators for aggregate, idiosyncratic,
//!   purely deterministic and separable space-time scenarios;
//! * [`spectral`]: nested eigenvalue profiles, factor-count detection,
//!   loadings, strong linear independence, averaging sequences and factor
//!   realization;
//! * [`stationary`]: autocovariances, spectral lines, sin/cos amplitude
//!   recovery and the PD/PND split of a single stationary realization;
//! * [`field`]: flocking extraction from separable random fields;
//! * [`io`]: CSV/JSON formats and scenario configuration.
//!
//! Data-parallel loops use rayon when the `parallel` feature (default) is on.

pub mod covariance;
pub mod error;
pub mod field;
pub mod io;
pub mod linalg;
pub mod par;
pub mod spectral;
pub mod stationary;
pub mod synthesis;
pub mod tolerances;
pub mod types;

pub use covariance::{
    validate_covariance, CovarianceReport, CovarianceSource, CovarianceSupplier, DenseCovariance, FnCovariance,
    ToeplitzCovariance,
};
pub use error::{GfaError, Result};
pub use tolerances::Tolerances;
pub use types::*;
