use serde::{Deserialize, Serialize};

use super::{Copula, GammaPrior, JointModel, Marginal, ModelError, ParamPath};

/// Copula choice in a family description. A nonzero slope makes the
/// parameter move linearly with `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CopulaSpec {
    #[default]
    Independence,
    Clayton {
        alpha: f64,
        #[serde(default)]
        alpha_slope: f64,
    },
    Gaussian {
        rho: f64,
        #[serde(default)]
        rho_slope: f64,
    },
}

impl CopulaSpec {
    pub fn build(&self, dim: usize) -> Copula {
        match *self {
            CopulaSpec::Independence => Copula::Independence { dim },
            CopulaSpec::Clayton { alpha, alpha_slope } => {
                Copula::Clayton { dim, alpha: ParamPath { base: alpha, slope: alpha_slope } }
            }
            CopulaSpec::Gaussian { rho, rho_slope } => {
                Copula::Gaussian { dim, rho: ParamPath { base: rho, slope: rho_slope } }
            }
        }
    }

    pub fn varies_with_gamma(&self) -> bool {
        match *self {
            CopulaSpec::Independence => false,
            CopulaSpec::Clayton { alpha_slope, .. } => alpha_slope != 0.0,
            CopulaSpec::Gaussian { rho_slope, .. } => rho_slope != 0.0,
        }
    }
}

fn default_center() -> f64 {
    0.25
}
fn default_slope() -> f64 {
    0.5
}
fn default_scale() -> f64 {
    0.2
}

/// Registered model families, addressable by name from configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `gamma ~ U[0,1]`, `theta^j | gamma ~ U[gamma, gamma + 1]`.
    ClUniform {
        goods: usize,
        #[serde(default)]
        copula: CopulaSpec,
    },
    /// Truncated logistic on `[0,1]` with location `center + slope * gamma`.
    Location {
        goods: usize,
        #[serde(default)]
        copula: CopulaSpec,
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default = "default_slope")]
        slope: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// `theta^j ~ U[0,1]` whatever the type.
    GammaIndependent {
        goods: usize,
        #[serde(default)]
        copula: CopulaSpec,
    },
    Custom {
        prior: GammaPrior,
        marginals: Vec<Marginal>,
        #[serde(default)]
        copula: CopulaSpec,
        #[serde(default)]
        invariant: Option<bool>,
    },
}

impl FamilySpec {
    pub fn label(&self) -> String {
        let (base, copula) = match self {
            FamilySpec::ClUniform { copula, .. } => ("cl-uniform", copula),
            FamilySpec::Location { copula, .. } => ("location", copula),
            FamilySpec::GammaIndependent { copula, .. } => ("gamma-independent", copula),
            FamilySpec::Custom { copula, .. } => ("custom", copula),
        };
        let c = match copula {
            CopulaSpec::Independence => "independence".to_string(),
            CopulaSpec::Clayton { alpha, alpha_slope } if *alpha_slope == 0.0 => format!("clayton({alpha})"),
            CopulaSpec::Clayton { alpha, alpha_slope } => format!("clayton({alpha}+{alpha_slope}g)"),
            CopulaSpec::Gaussian { rho, rho_slope } if *rho_slope == 0.0 => format!("gaussian({rho})"),
            CopulaSpec::Gaussian { rho, rho_slope } => format!("gaussian({rho}+{rho_slope}g)"),
        };
        format!("{base}/{c}")
    }

    pub fn build(&self) -> Result<JointModel, ModelError> {
        let (prior, marginals, copula, invariant) = match self {
            FamilySpec::ClUniform { goods, copula } => {
                (GammaPrior::unit_uniform(), vec![Marginal::cl_uniform(); *goods], copula, None)
            }
            FamilySpec::Location { goods, copula, center, slope, scale } => {
                let m = Marginal::TruncatedLogistic { center: *center, slope: *slope, scale: *scale, lo: 0.0, hi: 1.0 };
                (GammaPrior::unit_uniform(), vec![m; *goods], copula, None)
            }
            FamilySpec::GammaIndependent { goods, copula } => {
                (GammaPrior::unit_uniform(), vec![Marginal::static_unit(); *goods], copula, None)
            }
            FamilySpec::Custom { prior, marginals, copula, invariant } => {
                (prior.clone(), marginals.clone(), copula, *invariant)
            }
        };
        let flag = invariant.unwrap_or(!copula.varies_with_gamma());
        JointModel::new(prior, marginals.clone(), copula.build(marginals.len()), flag)
    }
}
