use serde::{Deserialize, Serialize};

use super::{JointModel, ModelError};
use crate::numerics::{gauss_rule, geometric_breaks, AxisRule};

/// Quadrature settings for conditional expectations over `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadOptions {
    /// Gauss order per panel when the copula is independence.
    pub theta_order: usize,
    /// Gauss order per panel on graded meshes (dependent copulas).
    pub graded_order: usize,
    /// Geometric ratio of panel widths toward support edges.
    pub grading_ratio: f64,
    /// Smallest graded panel, as a fraction of the support width.
    pub grading_floor: f64,
    /// Gauss order per `gamma` cell.
    pub gamma_order: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { theta_order: 32, graded_order: 10, grading_ratio: 0.25, grading_floor: 1e-8, gamma_order: 4 }
    }
}

impl JointModel {
    /// Composite rules over the rank axis `[0, 1]` of each good at `gamma`,
    /// split where the `theta`-breakpoints land and graded toward both
    /// faces for dependent copulas.
    pub fn rank_axes(&self, gamma: f64, breaks: &[Vec<f64>], opts: &QuadOptions) -> Result<Vec<AxisRule>, ModelError> {
        let graded = !self.copula.is_independence();
        let order = if graded { opts.graded_order } else { opts.theta_order };
        let reference = gauss_rule(order, -1.0, 1.0)?;
        self.marginals
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let mut cuts: Vec<f64> = breaks.get(j).map(|b| b.iter().map(|&x| m.cdf(x, gamma)).collect()).unwrap_or_default();
                if graded {
                    cuts.extend(geometric_breaks(0.0, 1.0, opts.grading_ratio, opts.grading_floor));
                }
                Ok(AxisRule::composite(&reference, 0.0, 1.0, &cuts)?)
            })
            .collect()
    }

    /// Calls `visit(theta, weight)` at every node, with the conditional
    /// density folded into `weight`. Integration runs over percentile
    /// ranks, `theta^j = (F^j)^{-1}(u^j | gamma)`.
    pub fn integrate_theta<F: FnMut(&[f64], f64)>(
        &self,
        gamma: f64,
        breaks: &[Vec<f64>],
        opts: &QuadOptions,
        mut visit: F,
    ) -> Result<(), ModelError> {
        self.integrate_nodes(gamma, breaks, opts, false, |theta, w, _| visit(theta, w))
    }

    /// As [`Self::integrate_theta`], also passing the score at each node.
    pub fn integrate_theta_scored<F: FnMut(&[f64], f64, f64)>(
        &self,
        gamma: f64,
        breaks: &[Vec<f64>],
        opts: &QuadOptions,
        visit: F,
    ) -> Result<(), ModelError> {
        self.integrate_nodes(gamma, breaks, opts, true, visit)
    }

    fn integrate_nodes<F: FnMut(&[f64], f64, f64)>(
        &self,
        gamma: f64,
        breaks: &[Vec<f64>],
        opts: &QuadOptions,
        scored: bool,
        mut visit: F,
    ) -> Result<(), ModelError> {
        let axes = self.rank_axes(gamma, breaks, opts)?;
        let prepared = self.copula.prepare(gamma);
        let dim = axes.len();
        let mut values = Vec::with_capacity(dim);
        let mut features = Vec::with_capacity(dim);
        for (m, axis) in self.marginals.iter().zip(&axes) {
            values.push(axis.nodes.iter().map(|&u| m.quantile(u, gamma)).collect::<Result<Vec<f64>, _>>()?);
            features.push(axis.nodes.iter().map(|&u| prepared.features(u)).collect::<Vec<_>>());
        }
        // Per-axis score pieces: f^j_gamma / f^j and F^j_gamma.
        let analytic = scored
            && !self.force_finite_difference
            && self.marginals.iter().all(|m| m.cdf_gamma_analytic(0.5, gamma).is_some() && m.pdf_gamma_analytic(0.5, gamma).is_some());
        let mut density_terms = Vec::new();
        let mut cdf_terms = Vec::new();
        if analytic {
            for (j, vals) in values.iter().enumerate() {
                let m = &self.marginals[j];
                density_terms.push(vals.iter().map(|&x| self.marginal_pdf_gamma(j, x, gamma) / m.pdf(x, gamma)).collect::<Vec<_>>());
                cdf_terms.push(vals.iter().map(|&x| self.marginal_cdf_gamma(j, x, gamma)).collect::<Vec<_>>());
            }
        }
        let path_term = scored && !self.copula.is_gamma_invariant();
        let independent = self.copula.is_independence();
        let mut idx = vec![0usize; dim];
        let mut theta: Vec<f64> = values.iter().map(|v| v[0]).collect();
        let mut u = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        let mut failure = None;
        loop {
            let mut w: f64 = idx.iter().zip(&axes).map(|(&i, a)| a.weights[i]).product();
            if !independent {
                w *= prepared.log_density(idx.iter().zip(&features).map(|(&i, f)| &f[i])).exp();
            }
            if w > 0.0 && w.is_finite() {
                let score = if !scored {
                    0.0
                } else if analytic {
                    let mut s: f64 = idx.iter().zip(&density_terms).map(|(&i, d)| d[i]).sum();
                    if !independent {
                        for j in 0..dim {
                            u[j] = axes[j].nodes[idx[j]];
                            b[j] = cdf_terms[j][idx[j]];
                        }
                        let pts = u.iter().copied().zip(idx.iter().zip(&features).map(|(&i, f)| &f[i]));
                        s += prepared.grad_dot(pts, &b);
                    }
                    if path_term {
                        s += self.copula.log_density_gamma(&u, gamma, self.gamma_step());
                    }
                    s
                } else {
                    match self.score(gamma, &theta) {
                        Ok(s) => s,
                        Err(e) => {
                            failure = Some(e);
                            0.0
                        }
                    }
                };
                visit(&theta, w, score);
            }
            let mut d = dim;
            loop {
                if d == 0 {
                    return match failure {
                        Some(e) => Err(e),
                        None => Ok(()),
                    };
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    theta[d] = values[d][idx[d]];
                    break;
                }
                idx[d] = 0;
                theta[d] = values[d][0];
            }
        }
    }

    /// `E[h(theta) | gamma]`.
    pub fn expect_theta<H: Fn(&[f64]) -> f64>(
        &self,
        gamma: f64,
        breaks: &[Vec<f64>],
        opts: &QuadOptions,
        h: H,
    ) -> Result<f64, ModelError> {
        let mut total = 0.0;
        self.integrate_theta(gamma, breaks, opts, |theta, w| total += w * h(theta))?;
        Ok(total)
    }

    /// Rent density `int h(theta) f_gamma(theta | gamma) dtheta`.
    ///
    /// With a fixed support this integrates `h` against the score. When
    /// the support moves with `gamma`, `f_gamma` carries mass on the moving
    /// edges, and the integral is taken as the `gamma`-derivative of
    /// `E[h | gamma]` instead.
    pub fn rent_density<H: Fn(&[f64]) -> f64>(
        &self,
        gamma: f64,
        breaks: &[Vec<f64>],
        opts: &QuadOptions,
        h: H,
    ) -> Result<f64, ModelError> {
        if !self.has_moving_support() {
            let mut total = 0.0;
            self.integrate_theta_scored(gamma, breaks, opts, |theta, w, s| total += w * s * h(theta))?;
            return Ok(total);
        }
        let (lo, hi) = self.gamma_range();
        let step = 1e-6 * (hi - lo);
        let e = |g: f64| self.expect_theta(g, breaks, opts, &h);
        if gamma - step < lo {
            Ok((-3.0 * e(gamma)? + 4.0 * e(gamma + step)? - e(gamma + 2.0 * step)?) / (2.0 * step))
        } else if gamma + step > hi {
            Ok((3.0 * e(gamma)? - 4.0 * e(gamma - step)? + e(gamma - 2.0 * step)?) / (2.0 * step))
        } else {
            Ok((e(gamma + step)? - e(gamma - step)?) / (2.0 * step))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Copula, GammaPrior, Marginal, ParamPath};

    fn model(marginal: Marginal, copula: Copula) -> JointModel {
        let n = copula.dim();
        JointModel::new(GammaPrior::unit_uniform(), vec![marginal; n], copula, true).unwrap()
    }

    #[test]
    fn cl_uniform_means() {
        let m = model(Marginal::cl_uniform(), Copula::Independence { dim: 2 });
        let e = m.expect_theta(0.3, &[vec![], vec![]], &QuadOptions::default(), |t| t[0] + t[1]).unwrap();
        assert!((e - 2.0 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn clayton_preserves_marginal_means() {
        let clayton = Copula::Clayton { dim: 2, alpha: ParamPath::constant(2.0) };
        let m = model(Marginal::cl_uniform(), clayton);
        let e = m.expect_theta(0.3, &[vec![], vec![]], &QuadOptions::default(), |t| t[1]).unwrap();
        assert!((e - 0.8).abs() < 1e-8, "{e}");
    }

    #[test]
    fn cl_uniform_rent_density_closed_form() {
        // E[max(0, theta - p) | gamma] = (gamma + 1 - p)^2 / 2 for p in the support.
        let m = model(Marginal::cl_uniform(), Copula::Independence { dim: 1 });
        let p = 0.9;
        let d = m
            .rent_density(0.4, &[vec![p]], &QuadOptions::default(), |t| (t[0] - p).max(0.0))
            .unwrap();
        assert!((d - (0.4 + 1.0 - p)).abs() < 1e-8, "{d}");
    }

    #[test]
    fn smooth_rent_density_matches_difference_of_means() {
        let m = model(
            Marginal::TruncatedLogistic { center: 0.3, slope: 0.4, scale: 0.2, lo: 0.0, hi: 1.0 },
            Copula::Clayton { dim: 2, alpha: ParamPath::constant(2.0) },
        );
        let opts = QuadOptions::default();
        let br = [vec![0.5], vec![0.4]];
        let h = |t: &[f64]| (t[0] - 0.5).max(0.0) + (t[1] - 0.4).max(0.0);
        let d = m.rent_density(0.45, &br, &opts, h).unwrap();
        let s = 1e-4;
        let fd = (m.expect_theta(0.45 + s, &br, &opts, h).unwrap() - m.expect_theta(0.45 - s, &br, &opts, h).unwrap()) / (2.0 * s);
        assert!((d - fd).abs() < 1e-6, "{d} vs {fd}");
        assert!(d > 0.0);
    }

    #[test]
    fn node_scores_match_pointwise_score() {
        let marg = Marginal::TruncatedLogistic { center: 0.25, slope: 0.5, scale: 0.2, lo: 0.0, hi: 1.0 };
        let cops = [
            Copula::Clayton { dim: 2, alpha: ParamPath::constant(2.0) },
            Copula::Gaussian { dim: 2, rho: ParamPath::constant(0.5) },
            Copula::Gaussian { dim: 2, rho: ParamPath { base: 0.2, slope: 0.6 } },
        ];
        for cop in cops {
            let flag = cop.is_gamma_invariant();
            let m = JointModel::new(GammaPrior::unit_uniform(), vec![marg.clone(); 2], cop, flag).unwrap();
            let mut worst: f64 = 0.0;
            m.integrate_theta_scored(0.4, &[vec![], vec![]], &QuadOptions::default(), |t, _, s| {
                // Ranks recomputed from theta lose digits within 1e-6 of the corners.
                if m.marginals.iter().zip(t).any(|(g, &x)| !(1e-6..=1.0 - 1e-6).contains(&g.cdf(x, 0.4))) {
                    return;
                }
                let direct = m.score(0.4, t).unwrap();
                worst = worst.max((s - direct).abs() / direct.abs().max(1.0));
            })
            .unwrap();
            assert!(worst < 1e-6, "{worst}");
        }
    }
}
