use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instance::{discretize, DiscreteInstance, GridSpec};
use super::relaxed::{solve_relaxed_with, OrthogonalInstance};
use super::solve::{solve_sequential_with, solve_simultaneous_with, OracleOptions, SolveReport};
use super::OracleError;
use crate::model::JointModel;

const ORDER_TOL: f64 = 1e-9;

/// Sum over goods of the simultaneous optimum of each one-good marginal.
pub fn separate_selling_value(inst: &DiscreteInstance) -> Result<f64, OracleError> {
    separate_selling_value_with(inst, &OracleOptions::default())
}

pub fn separate_selling_value_with(inst: &DiscreteInstance, opts: &OracleOptions) -> Result<f64, OracleError> {
    (0..inst.goods()).map(|j| solve_simultaneous_with(&inst.marginal(j), opts).map(|r| r.value)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub grid: GridSpec,
    pub full_surplus: f64,
    pub v_sim: f64,
    pub v_seq: f64,
    pub v_relaxed: f64,
    pub v_separate: f64,
    pub gap_sim_separate: f64,
    pub gap_seq_sim: f64,
    pub gap_relaxed_sim: f64,
    /// Every type's pmf is a product of its marginals.
    pub independent_goods: bool,
    /// Regime orderings and the full-surplus cap, to 1e-9.
    pub orderings_hold: bool,
    #[serde(skip)]
    pub instance: Option<DiscreteInstance>,
    /// Simultaneous, sequential and relaxed solutions.
    #[serde(skip)]
    pub reports: Vec<SolveReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTrends {
    pub sim_separate: bool,
    pub seq_sim: bool,
    pub relaxed_sim: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeComparison {
    pub levels: Vec<LevelResult>,
    /// Whether each gap is nonincreasing (to 1e-9) along the ladder.
    pub gaps_nonincreasing: GapTrends,
}

/// Solves all four regimes on one instance.
pub fn compare_instance(inst: &DiscreteInstance, opts: &OracleOptions) -> Result<LevelResult, OracleError> {
    let sim = solve_simultaneous_with(inst, opts)?;
    let seq = solve_sequential_with(inst, opts)?;
    let relaxed = solve_relaxed_with(&OrthogonalInstance::from_instance(inst)?, opts)?;
    let v_separate = separate_selling_value_with(inst, opts)?;
    let independent_goods = inst.is_product(1e-12);
    let full_surplus = inst.full_surplus();
    let capped = [sim.value, seq.value, relaxed.value, v_separate].iter().all(|&v| v <= full_surplus + ORDER_TOL);
    let orderings_hold = capped
        && relaxed.value >= sim.value - ORDER_TOL
        && sim.value >= v_separate - ORDER_TOL
        && (!independent_goods || seq.value >= sim.value - ORDER_TOL);
    Ok(LevelResult {
        grid: inst.lineage.as_ref().map(|l| l.grid.clone()).unwrap_or(GridSpec {
            gamma_cells: inst.types(),
            theta_cells: inst.dims(),
        }),
        full_surplus,
        v_sim: sim.value,
        v_seq: seq.value,
        v_relaxed: relaxed.value,
        v_separate,
        gap_sim_separate: sim.value - v_separate,
        gap_seq_sim: seq.value - sim.value,
        gap_relaxed_sim: relaxed.value - sim.value,
        independent_goods,
        orderings_hold,
        instance: Some(inst.clone()),
        reports: vec![sim, seq, relaxed],
    })
}

/// Regime values along a refinement ladder of grids.
pub fn compare_regimes(model: &JointModel, specs: &[GridSpec], opts: &OracleOptions) -> Result<RegimeComparison, OracleError> {
    let refines = specs.windows(2).all(|w| {
        w[1].gamma_cells >= w[0].gamma_cells
            && w[1].theta_cells.len() == w[0].theta_cells.len()
            && w[1].theta_cells.iter().zip(&w[0].theta_cells).all(|(b, a)| b >= a)
    });
    if specs.is_empty() || !refines {
        return Err(OracleError::InvalidInstance("grid ladder must be nonempty and increasing".into()));
    }
    let instances = specs.iter().map(|s| discretize(model, s)).collect::<Result<Vec<_>, _>>()?;
    let levels = instances.par_iter().map(|inst| compare_instance(inst, opts)).collect::<Result<Vec<_>, _>>()?;
    let trend = |gap: fn(&LevelResult) -> f64| levels.windows(2).all(|w| gap(&w[1]) <= gap(&w[0]) + ORDER_TOL);
    let gaps_nonincreasing = GapTrends {
        sim_separate: trend(|l| l.gap_sim_separate),
        seq_sim: trend(|l| l.gap_seq_sim),
        relaxed_sim: trend(|l| l.gap_relaxed_sim),
    };
    Ok(RegimeComparison { levels, gaps_nonincreasing })
}
