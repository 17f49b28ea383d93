//! Threshold mechanisms: virtual values and strike prices, transfers and
//! upfront fees, revenue in three forms, and incentive audits.

mod audit;
mod revenue;
mod threshold;

pub use audit::{
    cyclic_monotonicity_check, ic_audit, max_cycle_sum, regularity_report, IcAudit, InterimUtilityCurve,
    RegularityReport, Violation,
};
pub use revenue::{
    full_surplus, interim_utility, revenue_direct, revenue_functional, revenue_impulse_form, revenue_report,
    upfront_t1, RevenueReport,
};
pub use threshold::{solve_thresholds, uniform_gamma_grid, virtual_value, ThresholdMechanism};

use thiserror::Error;

use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("regularity violation: {0}")]
    RegularityViolation(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("upfront fees have not been computed")]
    UpfrontMissing,
    #[error("mechanism file: {0}")]
    Parse(String),
}

impl From<NumericsError> for MechError {
    fn from(e: NumericsError) -> Self {
        MechError::Model(e.into())
    }
}

#[cfg(test)]
mod tests;
