//! Explicit linear feature maps for the chi-squared and exponential
//! chi-squared kernels on histogram data.
//!
//! The pieces, in pipeline order:
//!
//! - [`histio`]: validated histogram/label matrices, CSV and binary I/O,
//!   chunked out-of-core streaming, and log-binned value histograms.
//! - [`chi2direct`]: the geometrically convergent direct series for the
//!   chi-squared kernel, with data-adaptive greedy parameter fitting and
//!   exact residual/error-bound formulas.
//! - [`chebyshev`]: the closed-form Chebyshev/Fourier coefficient series for
//!   the same kernel, via the stable three-term recurrence.
//! - [`rfmap`]: random Fourier lifting that turns either embedding into a
//!   finite-dimensional map for the exponential chi-squared kernel.
//! - [`pipeline`]: embedding + lifting configurations, including the
//!   plain-text multi-kernel config format.
//! - [`oocpca`]: single-pass moment accumulation, centered PCA, ridge
//!   regression in the projected space, and score calibration — all
//!   out-of-core over row chunks.
//! - [`model`]: trained-model serialization.
//! - [`synth`]: a Dirichlet-mixture benchmark task for end-to-end checks.
//!
//! Matrix-level operations are data-parallel over rows via rayon when the
//! default `parallel` feature is on; every parallel entry point has a
//! `*_serial` twin with identical output.

pub mod chebyshev;
pub mod chi2direct;
pub mod error;
pub mod histio;
pub mod model;
pub mod oocpca;
pub mod pipeline;
pub mod rfmap;
pub mod synth;

pub use error::{Chi2Error, Result};
