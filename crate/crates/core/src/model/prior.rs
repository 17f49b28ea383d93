use serde::{Deserialize, Serialize};

use super::ModelError;

/// Distribution `G` of the pre-contract type on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaPrior {
    Uniform { lo: f64, hi: f64 },
    /// Exponential with the given rate, truncated to `[lo, hi]`.
    TruncatedExponential { rate: f64, lo: f64, hi: f64 },
}

impl GammaPrior {
    pub fn unit_uniform() -> Self {
        GammaPrior::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        match *self {
            GammaPrior::Uniform { lo, .. } | GammaPrior::TruncatedExponential { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            GammaPrior::Uniform { hi, .. } | GammaPrior::TruncatedExponential { hi, .. } => hi,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (lo, hi) = (self.lo(), self.hi());
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ModelError::InvalidParameter(format!("prior support [{lo}, {hi}]")));
        }
        if let GammaPrior::TruncatedExponential { rate, .. } = *self {
            if !(rate > 0.0) {
                return Err(ModelError::InvalidParameter(format!("exponential rate {rate}")));
            }
        }
        Ok(())
    }

    pub fn cdf(&self, gamma: f64) -> f64 {
        let (lo, hi) = (self.lo(), self.hi());
        if gamma <= lo {
            return 0.0;
        }
        if gamma >= hi {
            return 1.0;
        }
        match *self {
            GammaPrior::Uniform { .. } => (gamma - lo) / (hi - lo),
            GammaPrior::TruncatedExponential { rate, .. } => {
                -(-rate * (gamma - lo)).exp_m1() / -(-rate * (hi - lo)).exp_m1()
            }
        }
    }

    pub fn density(&self, gamma: f64) -> f64 {
        let (lo, hi) = (self.lo(), self.hi());
        if gamma < lo || gamma > hi {
            return 0.0;
        }
        match *self {
            GammaPrior::Uniform { .. } => 1.0 / (hi - lo),
            GammaPrior::TruncatedExponential { rate, .. } => {
                rate * (-rate * (gamma - lo)).exp() / -(-rate * (hi - lo)).exp_m1()
            }
        }
    }

    /// Survival mass `1 - G(gamma)`, computed without cancellation.
    pub fn survival(&self, gamma: f64) -> f64 {
        let (lo, hi) = (self.lo(), self.hi());
        if gamma <= lo {
            return 1.0;
        }
        if gamma >= hi {
            return 0.0;
        }
        match *self {
            GammaPrior::Uniform { .. } => (hi - gamma) / (hi - lo),
            GammaPrior::TruncatedExponential { rate, .. } => {
                // (e^{-r(g-lo)} - e^{-r(hi-lo)}) / (1 - e^{-r(hi-lo)})
                let num = (-rate * (gamma - lo)).exp() * -(-rate * (hi - gamma)).exp_m1();
                num / -(-rate * (hi - lo)).exp_m1()
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let (lo, hi) = (self.lo(), self.hi());
        let p = p.clamp(0.0, 1.0);
        match *self {
            GammaPrior::Uniform { .. } => lo + p * (hi - lo),
            GammaPrior::TruncatedExponential { rate, .. } => {
                let z = -(-rate * (hi - lo)).exp_m1();
                lo - (-p * z).ln_1p() / rate
            }
        }
    }

    /// Inverse hazard rate `(1 - G) / g`.
    pub fn hazard(&self, gamma: f64) -> Result<f64, ModelError> {
        let (lo, hi) = (self.lo(), self.hi());
        if gamma < lo || gamma > hi || gamma.is_nan() {
            return Err(ModelError::OutOfSupport(format!("gamma {gamma} outside [{lo}, {hi}]")));
        }
        if gamma >= hi {
            return Ok(0.0);
        }
        let g = self.density(gamma);
        if g <= 0.0 {
            return Err(ModelError::DensityZero(format!("prior density vanishes at {gamma}")));
        }
        Ok((self.survival(gamma) / g).max(0.0))
    }
}
