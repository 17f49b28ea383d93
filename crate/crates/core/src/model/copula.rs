use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use super::ModelError;
use crate::numerics::gauss_rule;

/// Smallest percentile handed to a copula density; keeps log-space
/// evaluation finite at the cube faces.
const U_FLOOR: f64 = 1e-300;

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Copula parameter as an affine function of the type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPath {
    pub base: f64,
    #[serde(default)]
    pub slope: f64,
}

impl ParamPath {
    pub fn constant(base: f64) -> Self {
        ParamPath { base, slope: 0.0 }
    }

    pub fn at(&self, gamma: f64) -> f64 {
        self.base + self.slope * gamma
    }
}

/// Dependence structure between the percentile ranks of the goods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Copula {
    Independence { dim: usize },
    Clayton { dim: usize, alpha: ParamPath },
    /// Equicorrelated Gaussian copula.
    Gaussian { dim: usize, rho: ParamPath },
}

impl Copula {
    pub fn dim(&self) -> usize {
        match *self {
            Copula::Independence { dim } | Copula::Clayton { dim, .. } | Copula::Gaussian { dim, .. } => dim,
        }
    }

    pub fn is_gamma_invariant(&self) -> bool {
        match self {
            Copula::Independence { .. } => true,
            Copula::Clayton { alpha: p, .. } | Copula::Gaussian { rho: p, .. } => p.slope == 0.0,
        }
    }

    pub fn is_independence(&self) -> bool {
        matches!(self, Copula::Independence { .. })
    }

    pub fn validate(&self, gamma_lo: f64, gamma_hi: f64) -> Result<(), ModelError> {
        if self.dim() == 0 {
            return Err(ModelError::InvalidParameter("copula dimension 0".into()));
        }
        for g in [gamma_lo, gamma_hi] {
            match self {
                Copula::Independence { .. } => {}
                Copula::Clayton { alpha, .. } => {
                    if !(alpha.at(g) > 0.0) {
                        return Err(ModelError::InvalidParameter(format!("clayton alpha {} at gamma {g}", alpha.at(g))));
                    }
                }
                Copula::Gaussian { dim, rho } => {
                    let r = rho.at(g);
                    let floor = if *dim > 1 { -1.0 / (*dim as f64 - 1.0) } else { -1.0 };
                    if !(r < 1.0 && r > floor) {
                        return Err(ModelError::InvalidParameter(format!("gaussian rho {r} at gamma {g}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn density(&self, u: &[f64], gamma: f64) -> f64 {
        self.log_density(u, gamma).exp()
    }

    pub fn log_density(&self, u: &[f64], gamma: f64) -> f64 {
        debug_assert_eq!(u.len(), self.dim());
        if u.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return f64::NEG_INFINITY;
        }
        match self {
            Copula::Independence { .. } => 0.0,
            Copula::Clayton { alpha, .. } => {
                let a = alpha.at(gamma);
                if u.iter().any(|&x| x <= 0.0) {
                    return f64::NEG_INFINITY;
                }
                let n = u.len() as f64;
                let norm: f64 = (0..u.len()).map(|k| (1.0 + k as f64 * a).ln()).sum();
                let sum_log_u: f64 = u.iter().map(|&x| x.max(U_FLOOR).ln()).sum();
                norm - (a + 1.0) * sum_log_u - (n + 1.0 / a) * clayton_log_s(u, a)
            }
            Copula::Gaussian { rho, .. } => {
                let r = rho.at(gamma);
                let x: Vec<f64> = u.iter().map(|&p| gaussian_score(p)).collect();
                let (quad, logdet) = equicorrelation_form(&x, r);
                -0.5 * logdet - 0.5 * quad
            }
        }
    }

    /// Gradient of `ln c` in the percentile ranks.
    pub fn log_density_grad(&self, u: &[f64], gamma: f64) -> Vec<f64> {
        match self {
            Copula::Independence { dim } => vec![0.0; *dim],
            Copula::Clayton { alpha, .. } => {
                let a = alpha.at(gamma);
                let n = u.len() as f64;
                let ls = clayton_log_s(u, a);
                u.iter()
                    .map(|&x| {
                        let x = x.max(U_FLOOR);
                        // u^{-a-1} / S computed in logs
                        let ratio = ((-a - 1.0) * x.ln() - ls).exp();
                        -(a + 1.0) / x + (n * a + 1.0) * ratio
                    })
                    .collect()
            }
            Copula::Gaussian { rho, .. } => {
                let r = rho.at(gamma);
                let n = u.len() as f64;
                let x: Vec<f64> = u.iter().map(|&p| gaussian_score(p)).collect();
                let sum: f64 = x.iter().sum();
                let k = r / (1.0 + (n - 1.0) * r);
                x.iter()
                    .map(|&xj| {
                        // ((R^{-1} - I) x)_j
                        let m = (xj - k * sum) / (1.0 - r) - xj;
                        -m / normal_pdf(xj)
                    })
                    .collect()
            }
        }
    }

    /// `d ln c / d gamma` at fixed ranks, by central difference along the
    /// parameter path. Zero for invariant copulas.
    pub fn log_density_gamma(&self, u: &[f64], gamma: f64, step: f64) -> f64 {
        if self.is_gamma_invariant() {
            return 0.0;
        }
        (self.log_density(u, gamma + step) - self.log_density(u, gamma - step)) / (2.0 * step)
    }

    pub fn cdf(&self, u: &[f64], gamma: f64) -> Result<f64, ModelError> {
        if u.iter().any(|&x| x <= 0.0) {
            return Ok(0.0);
        }
        let u: Vec<f64> = u.iter().map(|&x| x.min(1.0)).collect();
        match self {
            Copula::Independence { .. } => Ok(u.iter().product()),
            Copula::Clayton { alpha, .. } => {
                let a = alpha.at(gamma);
                Ok((-clayton_log_s(&u, a) / a).exp())
            }
            Copula::Gaussian { rho, dim } => {
                let inner: Vec<f64> = u.iter().copied().filter(|&x| x < 1.0).collect();
                match inner.len() {
                    0 => Ok(1.0),
                    1 => Ok(inner[0]),
                    2 => Ok(bivariate_normal_cdf(normal_quantile(inner[0]), normal_quantile(inner[1]), rho.at(gamma))),
                    _ => Err(ModelError::Unsupported(format!("gaussian copula cdf in dimension {dim}"))),
                }
            }
        }
    }

    /// Conditional-quantile chain: maps independent uniforms `z` to ranks
    /// distributed according to the copula. Coordinates with `z_k` in
    /// `{0, 1}` map to `{0, 1}`.
    pub fn conditional_quantiles(&self, z: &[f64], gamma: f64) -> Vec<f64> {
        match self {
            Copula::Independence { .. } => z.to_vec(),
            Copula::Clayton { alpha, .. } => {
                let a = alpha.at(gamma);
                let mut eta = Vec::with_capacity(z.len());
                let mut s_inv_sum = 0.0;
                for (k, &w) in z.iter().enumerate() {
                    let v = if k == 0 || w <= 0.0 || w >= 1.0 {
                        w.clamp(0.0, 1.0)
                    } else {
                        let s = s_inv_sum - k as f64 + 1.0;
                        let e = -a / (1.0 + k as f64 * a);
                        let inner = s * (w.powf(e) - 1.0) + 1.0;
                        if inner.is_finite() {
                            inner.powf(-1.0 / a)
                        } else {
                            0.0
                        }
                    };
                    s_inv_sum += v.max(U_FLOOR).powf(-a);
                    eta.push(v);
                }
                eta
            }
            Copula::Gaussian { rho, dim } => {
                let l = equicorrelation_cholesky(*dim, rho.at(gamma));
                let w: Vec<f64> = z.iter().map(|&p| gaussian_score(p)).collect();
                (0..*dim)
                    .map(|k| {
                        if z[k] <= 0.0 || z[k] >= 1.0 {
                            return z[k].clamp(0.0, 1.0);
                        }
                        let x: f64 = (0..=k).map(|i| l[k][i] * w[i]).sum();
                        normal_cdf(x)
                    })
                    .collect()
            }
        }
    }
}

/// Copula log-density at a fixed type, assembled from per-axis features so
/// that a tensor grid pays the transcendental cost once per axis node.
#[derive(Debug, Clone, Copy)]
pub(crate) enum PreparedCopula {
    Independence,
    Clayton { a: f64, norm: f64, n: f64 },
    Gaussian { r: f64, k: f64, logdet: f64 },
}

impl PreparedCopula {
    /// Per-axis features of rank `u` in `(0, 1)`.
    pub(crate) fn features(&self, u: f64) -> [f64; 2] {
        match *self {
            PreparedCopula::Independence => [0.0, 0.0],
            PreparedCopula::Clayton { a, .. } => {
                let l = u.max(U_FLOOR).ln();
                [l, (-a * l).exp()]
            }
            PreparedCopula::Gaussian { .. } => {
                let x = gaussian_score(u);
                [x, x * x]
            }
        }
    }

    pub(crate) fn log_density<'a, I: Iterator<Item = &'a [f64; 2]>>(&self, features: I) -> f64 {
        match *self {
            PreparedCopula::Independence => 0.0,
            PreparedCopula::Clayton { a, norm, n } => {
                let (mut sum_log, mut sum_pow) = (0.0, 0.0);
                for f in features {
                    sum_log += f[0];
                    sum_pow += f[1];
                }
                norm - (a + 1.0) * sum_log - (n + 1.0 / a) * (sum_pow - n + 1.0).ln()
            }
            PreparedCopula::Gaussian { r, k, logdet } => {
                let (mut sum, mut sq) = (0.0, 0.0);
                for f in features {
                    sum += f[0];
                    sq += f[1];
                }
                -0.5 * logdet - 0.5 * ((sq - k * sum * sum) / (1.0 - r) - sq)
            }
        }
    }
}

impl PreparedCopula {
    /// `sum_j (d ln c / d u_j) b_j` at ranks `u` with matching features.
    pub(crate) fn grad_dot<'a, I>(&self, points: I, b: &[f64]) -> f64
    where
        I: Iterator<Item = (f64, &'a [f64; 2])> + Clone,
    {
        match *self {
            PreparedCopula::Independence => 0.0,
            PreparedCopula::Clayton { a, n, .. } => {
                let s = points.clone().map(|(_, f)| f[1]).sum::<f64>() - n + 1.0;
                points
                    .zip(b)
                    .map(|((u, f), &bj)| {
                        let u = u.max(U_FLOOR);
                        (-(a + 1.0) / u + (n * a + 1.0) * f[1] / (u * s)) * bj
                    })
                    .sum()
            }
            PreparedCopula::Gaussian { r, k, .. } => {
                let sum: f64 = points.clone().map(|(_, f)| f[0]).sum();
                points
                    .zip(b)
                    .map(|((_, f), &bj)| {
                        let x = f[0];
                        let m = (x - k * sum) / (1.0 - r) - x;
                        -m / normal_pdf(x) * bj
                    })
                    .sum()
            }
        }
    }
}

impl Copula {
    pub(crate) fn prepare(&self, gamma: f64) -> PreparedCopula {
        match self {
            Copula::Independence { .. } => PreparedCopula::Independence,
            Copula::Clayton { dim, alpha } => {
                let a = alpha.at(gamma);
                let norm = (0..*dim).map(|k| (1.0 + k as f64 * a).ln()).sum();
                PreparedCopula::Clayton { a, norm, n: *dim as f64 }
            }
            Copula::Gaussian { dim, rho } => {
                let r = rho.at(gamma);
                let n = *dim as f64;
                let k = r / (1.0 + (n - 1.0) * r);
                let logdet = (n - 1.0) * (1.0 - r).ln() + (1.0 + (n - 1.0) * r).ln();
                PreparedCopula::Gaussian { r, k, logdet }
            }
        }
    }
}

/// `ln(sum u_i^{-a} - n + 1)` evaluated without overflow.
fn clayton_log_s(u: &[f64], a: f64) -> f64 {
    let n = u.len() as f64;
    let exps: Vec<f64> = u.iter().map(|&x| -a * x.max(U_FLOOR).ln()).collect();
    let m = exps.iter().copied().fold(0.0f64, f64::max);
    let tail: f64 = exps.iter().map(|e| (e - m).exp()).sum::<f64>() - (n - 1.0) * (-m).exp();
    m + tail.max(f64::MIN_POSITIVE).ln()
}

fn gaussian_score(p: f64) -> f64 {
    normal_quantile(p.clamp(U_FLOOR, 1.0 - 1e-16))
}

/// Returns `(x' (R^{-1} - I) x, ln det R)` for the equicorrelation matrix.
fn equicorrelation_form(x: &[f64], r: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let sum: f64 = x.iter().sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    let k = r / (1.0 + (n - 1.0) * r);
    let quad = (sq - k * sum * sum) / (1.0 - r) - sq;
    let logdet = (n - 1.0) * (1.0 - r).ln() + (1.0 + (n - 1.0) * r).ln();
    (quad, logdet)
}

fn equicorrelation_cholesky(dim: usize, r: f64) -> Vec<Vec<f64>> {
    let mut l = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { r };
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (target - s).max(0.0).sqrt();
            } else {
                l[i][j] = (target - s) / l[j][j];
            }
        }
    }
    l
}

/// Bivariate standard normal cdf via Plackett's identity
/// `Phi2(x, y; r) = Phi(x) Phi(y) + int_0^r phi2(x, y; s) ds`.
fn bivariate_normal_cdf(x: f64, y: f64, r: f64) -> f64 {
    let base = normal_cdf(x) * normal_cdf(y);
    if r == 0.0 {
        return base;
    }
    let rule = gauss_rule(64, 0.0_f64.min(r), 0.0_f64.max(r)).expect("nondegenerate");
    let integral = rule.integrate(|s| {
        let om = 1.0 - s * s;
        (-(x * x - 2.0 * s * x * y + y * y) / (2.0 * om)).exp() / (2.0 * std::f64::consts::PI * om.sqrt())
    });
    (base + r.signum() * integral).clamp(0.0, 1.0)
}
