use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{FamilySpec, QuadOptions};
use crate::oracle::{GridSpec, OracleOptions};

/// A batch run: model family, shared settings and per-command sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilySpec,
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_gamma_points")]
    pub gamma_points: usize,
    #[serde(default)]
    pub quadrature: QuadOptions,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub identity: IdentityConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub sample: SampleConfig,
}

fn default_seed() -> u64 {
    1
}
fn default_gamma_points() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Mechanism CSV to audit; solved inline when absent.
    pub mechanism: Option<PathBuf>,
    pub true_types: usize,
    pub cycles: usize,
    pub cycle_length: usize,
    /// Allowed deviation gain relative to the full surplus.
    pub gain_tol: f64,
    pub ir_tol: f64,
    pub cycle_tol: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { mechanism: None, true_types: 51, cycles: 1000, cycle_length: 5, gain_tol: 1e-6, ir_tol: 1e-8, cycle_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub points: usize,
    /// Checked in addition to the run's family.
    pub families: Vec<FamilySpec>,
    pub divergence_tol: f64,
    pub boundary_tol: f64,
    pub invariance_tol: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self { points: 100, families: Vec::new(), divergence_tol: 1e-4, boundary_tol: 1e-6, invariance_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub ladder: Vec<GridSpec>,
    /// Instance JSON solved instead of the ladder.
    pub instance: Option<PathBuf>,
    pub options: OracleOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
    /// Draw `z` from the corners of the unit cube only.
    pub corners: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { count: 1000, corners: false }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("seed", self.seed as usize),
            ("gamma_points", self.gamma_points.saturating_sub(1)),
            ("audit.true_types", self.audit.true_types),
            ("audit.cycles", self.audit.cycles),
            ("audit.cycle_length", self.audit.cycle_length),
            ("identity.points", self.identity.points),
            ("sample.count", self.sample.count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(match *name {
                "gamma_points" => "gamma_points must be at least 2".into(),
                n => format!("{n} must be positive"),
            });
        }
        if self.oracle.ladder.iter().any(|g| g.gamma_cells == 0 || g.theta_cells.contains(&0)) {
            return Err("oracle grid sizes must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
