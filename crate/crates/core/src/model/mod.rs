//! Model primitives: the type prior, conditional marginals, the copula
//! coupling them, and the joint model assembled from the three.

mod copula;
mod expect;
mod family;
mod identity;
mod marginal;
mod prior;

pub use copula::{Copula, ParamPath};
pub use expect::QuadOptions;
pub use family::{CopulaSpec, FamilySpec};
pub use identity::{
    boundary_residual, divergence_residual, invariance_residual, percentile_grid, IdentitySummary,
};
pub use marginal::Marginal;
pub use prior::GammaPrior;


use thiserror::Error;

use crate::numerics::{fd_derivative, DEFAULT_FD_RELATIVE_STEP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outside support: {0}")]
    OutOfSupport(String),
    #[error("density vanishes: {0}")]
    DensityZero(String),
    #[error("operation requires invariant dependencies")]
    InvarianceRequired,
    #[error("quantile failed: {0}")]
    QuantileFailure(String),
    #[error("difference stencil leaves the domain: {0}")]
    StencilOutOfDomain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerics(#[from] crate::numerics::NumericsError),
}

/// Joint distribution of `(gamma, theta)`: prior `G`, marginals `F^j(.|gamma)`
/// and copula `C`, with `f(theta|gamma) = c(F^1, .., F^n) prod_j f^j`.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub prior: GammaPrior,
    pub marginals: Vec<Marginal>,
    pub copula: Copula,
    /// Declared `gamma`-invariance of the copula density.
    pub invariant_flag: bool,
    /// Use central differences in `gamma` even where closed forms exist.
    pub force_finite_difference: bool,
}

impl JointModel {
    pub fn new(
        prior: GammaPrior,
        marginals: Vec<Marginal>,
        copula: Copula,
        invariant_flag: bool,
    ) -> Result<Self, ModelError> {
        prior.validate()?;
        if marginals.is_empty() || marginals.len() != copula.dim() {
            return Err(ModelError::InvalidParameter(format!(
                "{} marginals for a {}-dimensional copula",
                marginals.len(),
                copula.dim()
            )));
        }
        for m in &marginals {
            m.validate(prior.lo(), prior.hi())?;
        }
        copula.validate(prior.lo(), prior.hi())?;
        let model = JointModel { prior, marginals, copula, invariant_flag, force_finite_difference: false };
        if invariant_flag {
            let grid = percentile_grid(9);
            let r = invariance_residual(&model, &grid, model.prior.lo(), model.prior.hi());
            if r > 1e-8 {
                return Err(ModelError::InvalidParameter(format!(
                    "declared invariant but copula density varies by {r:e}"
                )));
            }
        }
        Ok(model)
    }

    pub fn with_finite_differences(mut self) -> Self {
        self.force_finite_difference = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn gamma_range(&self) -> (f64, f64) {
        (self.prior.lo(), self.prior.hi())
    }

    /// Central-difference step in `gamma`.
    pub fn gamma_step(&self) -> f64 {
        DEFAULT_FD_RELATIVE_STEP * (self.prior.hi() - self.prior.lo())
    }

    pub fn box_bounds(&self) -> Vec<(f64, f64)> {
        self.marginals.iter().map(Marginal::bounds).collect()
    }

    pub fn support(&self, gamma: f64) -> Vec<(f64, f64)> {
        self.marginals.iter().map(|m| m.support(gamma)).collect()
    }

    pub fn has_moving_support(&self) -> bool {
        self.marginals.iter().any(Marginal::has_moving_support)
    }

    pub fn hazard(&self, gamma: f64) -> Result<f64, ModelError> {
        self.prior.hazard(gamma)
    }

    /// `dF^j/dgamma`, closed form when available.
    pub fn marginal_cdf_gamma(&self, j: usize, x: f64, gamma: f64) -> f64 {
        let m = &self.marginals[j];
        match m.cdf_gamma_analytic(x, gamma) {
            Some(v) if !self.force_finite_difference => v,
            _ => fd_derivative(|g| m.cdf(x, g), gamma, self.gamma_step()),
        }
    }

    /// `df^j/dgamma` on the support interior.
    pub fn marginal_pdf_gamma(&self, j: usize, x: f64, gamma: f64) -> f64 {
        let m = &self.marginals[j];
        match m.pdf_gamma_analytic(x, gamma) {
            Some(v) if !self.force_finite_difference => v,
            _ => fd_derivative(|g| m.pdf(x, g), gamma, self.gamma_step()),
        }
    }

    fn ranks(&self, theta: &[f64], gamma: f64) -> Vec<f64> {
        self.marginals.iter().zip(theta).map(|(m, &x)| m.cdf(x, gamma)).collect()
    }

    /// `f(theta | gamma)`; zero outside the support.
    pub fn joint_density(&self, gamma: f64, theta: &[f64]) -> f64 {
        let mut prod = 1.0;
        for (m, &x) in self.marginals.iter().zip(theta) {
            let d = m.pdf(x, gamma);
            if d <= 0.0 {
                return 0.0;
            }
            prod *= d;
        }
        if self.copula.is_independence() {
            return prod;
        }
        let c = self.copula.density(&self.ranks(theta, gamma), gamma);
        if c.is_finite() {
            c * prod
        } else {
            0.0
        }
    }

    /// `F(theta | gamma) = C(F^1, .., F^n)`.
    pub fn joint_cdf(&self, gamma: f64, theta: &[f64]) -> Result<f64, ModelError> {
        self.copula.cdf(&self.ranks(theta, gamma), gamma)
    }

    /// Score `d ln f(theta|gamma) / d gamma` at a point of positive density.
    pub fn score(&self, gamma: f64, theta: &[f64]) -> Result<f64, ModelError> {
        let f = self.joint_density(gamma, theta);
        if !(f > 0.0) {
            return Err(ModelError::DensityZero(format!("f({theta:?} | {gamma}) = 0")));
        }
        let analytic = !self.force_finite_difference
            && self.marginals.iter().zip(theta).all(|(m, &x)| {
                m.cdf_gamma_analytic(x, gamma).is_some() && m.pdf_gamma_analytic(x, gamma).is_some()
            });
        if !analytic {
            let h = self.gamma_step();
            let up = self.joint_density(gamma + h, theta);
            let down = self.joint_density(gamma - h, theta);
            return Ok((up - down) / (2.0 * h * f));
        }
        let u = self.ranks(theta, gamma);
        let grad = self.copula.log_density_grad(&u, gamma);
        let mut s = self.copula.log_density_gamma(&u, gamma, self.gamma_step());
        for (j, (m, &x)) in self.marginals.iter().zip(theta).enumerate() {
            let fj = m.pdf(x, gamma);
            s += self.marginal_pdf_gamma(j, x, gamma) / fj;
            if !self.copula.is_independence() {
                s += grad[j] * self.marginal_cdf_gamma(j, x, gamma);
            }
        }
        Ok(s)
    }

    /// Regular part of `f_gamma(theta | gamma)`; zero off the support.
    pub fn density_gamma(&self, gamma: f64, theta: &[f64]) -> f64 {
        let f = self.joint_density(gamma, theta);
        if f > 0.0 {
            self.score(gamma, theta).map(|s| s * f).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    /// Per-good `F^j_gamma / f^j` without checking invariance.
    pub(crate) fn marginal_impulse(&self, j: usize, x: f64, gamma: f64) -> Result<f64, ModelError> {
        let fj = self.marginals[j].pdf(x, gamma);
        if !(fj > 0.0) {
            return Err(ModelError::DensityZero(format!("f^{j}({x} | {gamma}) = 0")));
        }
        Ok(self.marginal_cdf_gamma(j, x, gamma) / fj)
    }

    /// Impulse responses `V^j = F^j_gamma / f^j`, valid under invariant
    /// dependencies.
    pub fn impulse_response(&self, gamma: f64, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        if !self.invariant_flag {
            return Err(ModelError::InvarianceRequired);
        }
        (0..self.dim()).map(|j| self.marginal_impulse(j, theta[j], gamma)).collect()
    }

    /// Orthogonalized sampler `theta = v(gamma, z)`: copula conditional
    /// quantiles followed by marginal quantiles.
    pub fn sample_theta(&self, gamma: f64, z: &[f64]) -> Result<Vec<f64>, ModelError> {
        if z.len() != self.dim() || z.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(ModelError::InvalidParameter(format!("z = {z:?}")));
        }
        let eta = self.copula.conditional_quantiles(z, gamma);
        self.marginals.iter().zip(eta).map(|(m, p)| m.quantile(p, gamma)).collect()
    }
}
