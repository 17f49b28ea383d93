use serde::Serialize;

use super::{JointModel, ModelError};
use crate::numerics::{uniform_draws, RngStream};

/// Interior percentile levels `1/(k+1), .., k/(k+1)`.
pub fn percentile_grid(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
}

fn for_each_grid_point<F: FnMut(&[f64])>(levels: &[f64], dim: usize, mut visit: F) {
    if levels.is_empty() || dim == 0 {
        return;
    }
    let mut idx = vec![0usize; dim];
    let mut u = vec![levels[0]; dim];
    loop {
        visit(&u);
        let mut d = dim;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < levels.len() {
                u[d] = levels[idx[d]];
                break;
            }
            idx[d] = 0;
            u[d] = levels[0];
        }
    }
}

/// `max_u |c(u | g1) - c(u | g2)|` over the tensor grid of `levels`.
pub fn invariance_residual(model: &JointModel, levels: &[f64], g1: f64, g2: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for_each_grid_point(levels, model.dim(), |u| {
        let d = (model.copula.density(u, g1) - model.copula.density(u, g2)).abs();
        worst = worst.max(d);
    });
    worst
}

/// `|sum_j d/dtheta_j (V^j f) - f_gamma|` at an interior point, all
/// derivatives by central differences. `V^j` is the per-marginal impulse
/// response whether or not the copula is invariant.
pub fn divergence_residual(model: &JointModel, gamma: f64, theta: &[f64], step: f64) -> Result<f64, ModelError> {
    let (glo, ghi) = model.gamma_range();
    let gstep = model.gamma_step();
    if gamma - gstep < glo || gamma + gstep > ghi {
        return Err(ModelError::StencilOutOfDomain(format!("gamma = {gamma}")));
    }
    for g in [gamma - gstep, gamma, gamma + gstep] {
        for (j, (lo, hi)) in model.support(g).into_iter().enumerate() {
            if theta[j] - step <= lo || theta[j] + step >= hi {
                return Err(ModelError::StencilOutOfDomain(format!("theta[{j}] = {}", theta[j])));
            }
        }
    }
    let flux = |j: usize, x: &[f64]| -> Result<f64, ModelError> {
        Ok(model.marginal_impulse(j, x[j], gamma)? * model.joint_density(gamma, x))
    };
    let mut div = 0.0;
    let mut x = theta.to_vec();
    for j in 0..theta.len() {
        x[j] = theta[j] + step;
        let up = flux(j, &x)?;
        x[j] = theta[j] - step;
        let down = flux(j, &x)?;
        x[j] = theta[j];
        div += (up - down) / (2.0 * step);
    }
    let f_gamma = (model.joint_density(gamma + gstep, theta) - model.joint_density(gamma - gstep, theta)) / (2.0 * gstep);
    Ok((div - f_gamma).abs())
}

/// `max_j |F^j_gamma|` at both ends of each good's box.
pub fn boundary_residual(model: &JointModel, gamma: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, m) in model.marginals.iter().enumerate() {
        let (lo, hi) = m.bounds();
        for x in [lo, hi] {
            worst = worst.max(model.marginal_cdf_gamma(j, x, gamma).abs());
        }
    }
    worst
}

/// Worst and mean residuals of the three identity checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentitySummary {
    pub divergence_max: f64,
    pub divergence_mean: f64,
    pub divergence_points: usize,
    pub boundary_max: f64,
    pub invariance: f64,
}

impl IdentitySummary {
    /// Evaluates the divergence residual at `points` random interior
    /// points, the boundary residual on a `gamma` grid, and the invariance
    /// residual between the ends of the prior support.
    pub fn compute(model: &JointModel, points: usize, stream: RngStream) -> Result<Self, ModelError> {
        let (glo, ghi) = model.gamma_range();
        let n = model.dim();
        let step = 1e-5 * model.box_bounds().iter().map(|(a, b)| b - a).fold(0.0, f64::max);
        let margin = 0.02;
        let mut residuals = Vec::with_capacity(points);
        for z in uniform_draws(stream, points, n + 1) {
            let gamma = glo + (ghi - glo) * (margin + (1.0 - 2.0 * margin) * z[0]);
            let theta: Vec<f64> = model
                .support(gamma)
                .iter()
                .zip(&z[1..])
                .map(|(&(lo, hi), &w)| lo + (hi - lo) * (margin + (1.0 - 2.0 * margin) * w))
                .collect();
            residuals.push(divergence_residual(model, gamma, &theta, step)?);
        }
        let boundary_max = (0..=20)
            .map(|k| boundary_residual(model, glo + (ghi - glo) * k as f64 / 20.0))
            .fold(0.0, f64::max);
        Ok(IdentitySummary {
            divergence_max: residuals.iter().copied().fold(0.0, f64::max),
            divergence_mean: residuals.iter().sum::<f64>() / residuals.len().max(1) as f64,
            divergence_points: residuals.len(),
            boundary_max,
            invariance: invariance_residual(model, &percentile_grid(9), glo, ghi),
        })
    }
}
