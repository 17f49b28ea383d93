//! Deterministic numerical primitives: Gauss-Legendre quadrature, bracketing
//! root finding, central differences and counter-based random streams.

mod diff;
mod quadrature;
mod rng;
mod roots;

pub use diff::{fd_partial, fd_partial_within, fd_derivative, DEFAULT_FD_RELATIVE_STEP};

pub use quadrature::{
    gauss_rule, geometric_breaks, tensor_integrate, tensor_integrate_split, AxisRule,
    QuadratureRule, DEFAULT_ORDER,
};
pub use rng::{uniform_draws, RngStream};
pub use roots::{bisect_root, DEFAULT_ROOT_TOL};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("quadrature order must be at least 1")]
    InvalidOrder,
    #[error("integrand is not finite at {point:?}")]
    EvaluationFailure { point: Vec<f64> },
    #[error("no sign change on [{lo}, {hi}]: g(lo)={g_lo}, g(hi)={g_hi}")]
    NoBracket { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("difference stencil leaves the domain on axis {axis}")]
    DomainViolation { axis: usize },
}
