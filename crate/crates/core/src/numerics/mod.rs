//! Reusable numerical kernels: convergent series, semi-infinite quadrature
//! and linear / nonlinear least squares.

// Matrix kernels index rows and columns explicitly.
#[allow(clippy::needless_range_loop)]
mod fit;
#[allow(clippy::needless_range_loop)]
pub(crate) mod linalg;
mod quad;
mod series;

pub use fit::{
    fit_linear_least_squares, fit_nonlinear_least_squares, fit_nonlinear_with, FitResult,
    NonlinearOptions,
};
pub(crate) use quad::integrate_panels;
pub use quad::{integrate_finite, integrate_semi_infinite};
pub use series::{sum_series, SeriesResult};

/// Default relative tolerance for series truncation and quadrature.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
