//! Local regression with simultaneous confidence bands for short,
//! irregularly sampled expression time courses.
//!
//! Each gene's series is smoothed by a local quadratic fit whose bandwidth is
//! chosen by generalised cross-validation. A tube-formula simultaneous band
//! around the fit decides whether expression at a later time differs from the
//! control time. External control probes give a surrogate false discovery
//! rate, and DE genes can be grouped by spectral clustering of their fitted
//! profiles. A quadratic-regression F-test is included as a baseline.

pub mod bands;
pub mod baseline;
pub mod dataset;
pub mod decaller;
pub mod error;
pub mod kmeans;
pub mod pipeline;
pub mod simgen;
pub mod smoother;
pub mod spectral;
pub mod stats;

pub use error::{LrsaError, Result};
