use serde::{Deserialize, Serialize};

use super::ModelError;

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logistic_density(x: f64) -> f64 {
    let l = logistic(x);
    l * (1.0 - l)
}

/// Conditional marginal `F^j(. | gamma)` of one good's valuation.
///
/// Each family lives in a fixed box; a support that moves with `gamma` is
/// embedded in the box with its density extended by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Marginal {
    /// Uniform on `[offset + slope * gamma, offset + slope * gamma + width]`.
    ShiftedUniform { offset: f64, slope: f64, width: f64, box_lo: f64, box_hi: f64 },
    /// Logistic with location `center + slope * gamma`, truncated to `[lo, hi]`.
    TruncatedLogistic { center: f64, slope: f64, scale: f64, lo: f64, hi: f64 },
}

impl Marginal {
    /// `theta | gamma ~ U[gamma, gamma + 1]` inside the box `[0, 2]`.
    pub fn cl_uniform() -> Self {
        Marginal::ShiftedUniform { offset: 0.0, slope: 1.0, width: 1.0, box_lo: 0.0, box_hi: 2.0 }
    }

    /// Uniform on `[0, 1]` for every type.
    pub fn static_unit() -> Self {
        Marginal::ShiftedUniform { offset: 0.0, slope: 0.0, width: 1.0, box_lo: 0.0, box_hi: 1.0 }
    }

    pub fn validate(&self, gamma_lo: f64, gamma_hi: f64) -> Result<(), ModelError> {
        match *self {
            Marginal::ShiftedUniform { offset, slope, width, box_lo, box_hi } => {
                if !(width > 0.0) || !(box_lo < box_hi) {
                    return Err(ModelError::InvalidParameter("shifted uniform width/box".into()));
                }
                for g in [gamma_lo, gamma_hi] {
                    let lo = offset + slope * g;
                    if lo < box_lo - 1e-12 || lo + width > box_hi + 1e-12 {
                        return Err(ModelError::InvalidParameter(format!(
                            "support at gamma={g} leaves the box [{box_lo}, {box_hi}]"
                        )));
                    }
                }
            }
            Marginal::TruncatedLogistic { scale, lo, hi, .. } => {
                if !(scale > 0.0) || !(lo < hi) {
                    return Err(ModelError::InvalidParameter("truncated logistic scale/box".into()));
                }
            }
        }
        Ok(())
    }

    /// The fixed box `[theta_lo, theta_hi]`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Marginal::ShiftedUniform { box_lo, box_hi, .. } => (box_lo, box_hi),
            Marginal::TruncatedLogistic { lo, hi, .. } => (lo, hi),
        }
    }

    /// Where the density is positive at `gamma`.
    pub fn support(&self, gamma: f64) -> (f64, f64) {
        match *self {
            Marginal::ShiftedUniform { offset, slope, width, box_lo, box_hi } => {
                let lo = offset + slope * gamma;
                (lo.max(box_lo), (lo + width).min(box_hi))
            }
            Marginal::TruncatedLogistic { lo, hi, .. } => (lo, hi),
        }
    }

    /// Rate at which each support edge moves with `gamma`.
    pub fn support_velocity(&self, gamma: f64) -> (f64, f64) {
        match *self {
            Marginal::ShiftedUniform { offset, slope, width, box_lo, box_hi } => {
                let lo = offset + slope * gamma;
                let v_lo = if lo > box_lo { slope } else { 0.0 };
                let v_hi = if lo + width < box_hi { slope } else { 0.0 };
                (v_lo, v_hi)
            }
            Marginal::TruncatedLogistic { .. } => (0.0, 0.0),
        }
    }

    /// Whether the support moves with `gamma` somewhere.
    pub fn has_moving_support(&self) -> bool {
        matches!(*self, Marginal::ShiftedUniform { slope, .. } if slope != 0.0)
    }

    pub fn cdf(&self, x: f64, gamma: f64) -> f64 {
        match *self {
            Marginal::ShiftedUniform { offset, slope, width, .. } => {
                ((x - offset - slope * gamma) / width).clamp(0.0, 1.0)
            }
            Marginal::TruncatedLogistic { center, slope, scale, lo, hi } => {
                if x <= lo {
                    return 0.0;
                }
                if x >= hi {
                    return 1.0;
                }
                let mu = center + slope * gamma;
                let la = logistic((lo - mu) / scale);
                let lb = logistic((hi - mu) / scale);
                ((logistic((x - mu) / scale) - la) / (lb - la)).clamp(0.0, 1.0)
            }
        }
    }

    pub fn pdf(&self, x: f64, gamma: f64) -> f64 {
        match *self {
            Marginal::ShiftedUniform { offset, slope, width, .. } => {
                let lo = offset + slope * gamma;
                if x >= lo && x <= lo + width {
                    1.0 / width
                } else {
                    0.0
                }
            }
            Marginal::TruncatedLogistic { center, slope, scale, lo, hi } => {
                if x < lo || x > hi {
                    return 0.0;
                }
                let mu = center + slope * gamma;
                let z = logistic((hi - mu) / scale) - logistic((lo - mu) / scale);
                logistic_density((x - mu) / scale) / (scale * z)
            }
        }
    }

    /// Closed-form `dF/dgamma`, when the family provides one.
    pub fn cdf_gamma_analytic(&self, x: f64, gamma: f64) -> Option<f64> {
        Some(match *self {
            Marginal::ShiftedUniform { offset, slope, width, .. } => {
                let lo = offset + slope * gamma;
                if x > lo && x < lo + width {
                    -slope / width
                } else {
                    0.0
                }
            }
            Marginal::TruncatedLogistic { center, slope, scale, lo, hi } => {
                if x <= lo || x >= hi {
                    return Some(0.0);
                }
                let mu = center + slope * gamma;
                let (a, b, t) = ((lo - mu) / scale, (hi - mu) / scale, (x - mu) / scale);
                let k = -slope / scale;
                let z = logistic(b) - logistic(a);
                let num = (logistic_density(t) - logistic_density(a)) * z
                    - (logistic(t) - logistic(a)) * (logistic_density(b) - logistic_density(a));
                k * num / (z * z)
            }
        })
    }

    /// Closed-form `df/dgamma` on the interior of the support.
    pub fn pdf_gamma_analytic(&self, x: f64, gamma: f64) -> Option<f64> {
        Some(match *self {
            Marginal::ShiftedUniform { .. } => 0.0,
            Marginal::TruncatedLogistic { center, slope, scale, lo, hi } => {
                if x < lo || x > hi {
                    return Some(0.0);
                }
                let mu = center + slope * gamma;
                let (a, b, t) = ((lo - mu) / scale, (hi - mu) / scale, (x - mu) / scale);
                let k = -slope / scale;
                let z = logistic(b) - logistic(a);
                let lt = logistic_density(t);
                let dlt = lt * (1.0 - 2.0 * logistic(t));
                let dz = k * (logistic_density(b) - logistic_density(a));
                (dlt * k * z - lt * dz) / (scale * z * z)
            }
        })
    }

    /// Generalized inverse of the cdf. The endpoints map to the box corners,
    /// `p = 0 -> theta_lo` and `p = 1 -> theta_hi`, for every `gamma`.
    pub fn quantile(&self, p: f64, gamma: f64) -> Result<f64, ModelError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::QuantileFailure(format!("probability {p} outside [0, 1]")));
        }
        let (box_lo, box_hi) = self.bounds();
        if p == 0.0 {
            return Ok(box_lo);
        }
        if p == 1.0 {
            return Ok(box_hi);
        }
        match *self {
            Marginal::ShiftedUniform { offset, slope, width, .. } => Ok(offset + slope * gamma + p * width),
            Marginal::TruncatedLogistic { center, slope, scale, lo, hi } => {
                let mu = center + slope * gamma;
                let la = logistic((lo - mu) / scale);
                let lb = logistic((hi - mu) / scale);
                let target = la + p * (lb - la);
                let x = mu + scale * (target / (1.0 - target)).ln();
                if !x.is_finite() {
                    return Err(ModelError::QuantileFailure(format!("p={p} gamma={gamma}")));
                }
                Ok(x.clamp(lo, hi))
            }
        }
    }
}
