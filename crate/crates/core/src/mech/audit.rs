use rayon::prelude::*;
use serde::Serialize;

use super::{virtual_value, MechError, ThresholdMechanism};
use crate::model::{JointModel, QuadOptions};

const REGULARITY_TOL: f64 = 1e-9;

/// A worst violation and where it occurred.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub amount: f64,
    pub good: usize,
    pub gamma: f64,
    pub theta: f64,
}

/// Grid checks of the regularity conditions under which threshold rules are
/// optimal: `F^j_gamma <= 0`, `phi^j` nondecreasing in `gamma` and crossing
/// zero at most once, upward, in `theta^j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub max_cdf_gamma: Option<Violation>,
    pub max_phi_decrease: Option<Violation>,
    pub crossing_violations: Vec<Violation>,
}

impl RegularityReport {
    pub fn passes(&self) -> bool {
        let ok = |v: &Option<Violation>| v.as_ref().is_none_or(|v| v.amount <= REGULARITY_TOL);
        ok(&self.max_cdf_gamma) && ok(&self.max_phi_decrease) && self.crossing_violations.is_empty()
    }
}

fn worse(slot: &mut Option<Violation>, cand: Violation) {
    if slot.as_ref().is_none_or(|v| cand.amount > v.amount) {
        *slot = Some(cand);
    }
}

/// Interior points of a support, as fractions strictly inside it.
fn interior(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| lo + (hi - lo) * (k as f64 + 0.5) / points as f64)
}

pub fn regularity_report(model: &JointModel, gamma_grid: &[f64], theta_points: usize) -> Result<RegularityReport, MechError> {
    let mut report = RegularityReport { max_cdf_gamma: None, max_phi_decrease: None, crossing_violations: Vec::new() };
    for j in 0..model.dim() {
        let (blo, bhi) = model.marginals[j].bounds();
        for &g in gamma_grid {
            for x in interior(blo, bhi, theta_points) {
                let v = model.marginal_cdf_gamma(j, x, g);
                worse(&mut report.max_cdf_gamma, Violation { amount: v, good: j, gamma: g, theta: x });
            }
            let (lo, hi) = model.marginals[j].support(g);
            let mut seen_nonneg = false;
            for x in interior(lo, hi, theta_points) {
                let phi = virtual_value(model, j, g, x)?;
                if phi >= 0.0 {
                    seen_nonneg = true;
                } else if seen_nonneg && phi < -REGULARITY_TOL {
                    report.crossing_violations.push(Violation { amount: -phi, good: j, gamma: g, theta: x });
                }
            }
        }
        for w in gamma_grid.windows(2) {
            let (lo0, hi0) = model.marginals[j].support(w[0]);
            let (lo1, hi1) = model.marginals[j].support(w[1]);
            let (lo, hi) = (lo0.max(lo1), hi0.min(hi1));
            if !(lo < hi) {
                continue;
            }
            for x in interior(lo, hi, theta_points) {
                let drop = virtual_value(model, j, w[0], x)? - virtual_value(model, j, w[1], x)?;
                worse(&mut report.max_phi_decrease, Violation { amount: drop, good: j, gamma: w[1], theta: x });
            }
        }
    }
    Ok(report)
}

/// `max` over cycles `theta_1 -> .. -> theta_k -> theta_1` of
/// `sum_i q(theta_i) . (theta_{i+1} - theta_i)`; nonpositive for gradients of
/// convex functions.
pub fn max_cycle_sum<Q: Fn(&[f64]) -> Vec<f64>>(q: Q, cycles: &[Vec<Vec<f64>>]) -> f64 {
    cycles
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            (0..c.len())
                .map(|i| {
                    let next = &c[(i + 1) % c.len()];
                    q(&c[i]).iter().zip(next.iter().zip(&c[i])).map(|(qj, (b, a))| qj * (b - a)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn cyclic_monotonicity_check(mech: &ThresholdMechanism, gamma: f64, cycles: &[Vec<Vec<f64>>]) -> f64 {
    let i = mech.menu_index(gamma);
    max_cycle_sum(|t| mech.allocation_at(i, t), cycles)
}

/// Interim utilities of truthful reports on the mechanism's grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterimUtilityCurve {
    pub gamma_grid: Vec<f64>,
    pub utility: Vec<f64>,
}

impl InterimUtilityCurve {
    /// Largest drop between consecutive grid points.
    pub fn max_decrease(&self) -> f64 {
        self.utility.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,U\n");
        for (g, u) in self.gamma_grid.iter().zip(&self.utility) {
            out.push_str(&format!("{},{}\n", crate::fmt_num(*g), crate::fmt_num(*u)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcAudit {
    /// `max_{gamma, gamma'} U(gamma' | gamma) - U(gamma)`.
    pub max_gain: f64,
    pub worst_true: f64,
    pub worst_report: f64,
    /// `min_gamma U(gamma)`.
    pub min_ir: f64,
    pub curve: InterimUtilityCurve,
}

/// Evaluates every misreport `gamma'` on the mechanism grid for every true
/// type in `true_types`; after misreporting, the buyer exercises the
/// options of the reported menu optimally.
pub fn ic_audit(model: &JointModel, mech: &ThresholdMechanism, true_types: &[f64], opts: &QuadOptions) -> Result<IcAudit, MechError> {
    if mech.upfront.len() != mech.gamma_grid.len() {
        return Err(MechError::UpfrontMissing);
    }
    let menus = mech.gamma_grid.len();
    let breaks: Vec<Vec<Vec<f64>>> = (0..menus).map(|k| mech.breaks_at(k)).collect();
    let rows: Vec<(f64, f64, usize)> = true_types
        .par_iter()
        .map(|&g| {
            let truthful = mech.menu_index(g);
            let mut values = Vec::with_capacity(menus);
            for k in 0..menus {
                let eu = model.expect_theta(g, &breaks[k], opts, |t| mech.utility_at(k, t))?;
                values.push(eu - mech.upfront[k]);
            }
            let own = values[truthful];
            let (best, gain) = values
                .iter()
                .enumerate()
                .map(|(k, v)| (k, v - own))
                .fold((truthful, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            Ok((own, gain, best))
        })
        .collect::<Result<_, MechError>>()?;
    let mut audit = IcAudit {
        max_gain: f64::NEG_INFINITY,
        worst_true: f64::NAN,
        worst_report: f64::NAN,
        min_ir: f64::INFINITY,
        curve: InterimUtilityCurve { gamma_grid: true_types.to_vec(), utility: rows.iter().map(|r| r.0).collect() },
    };
    for (&g, &(own, gain, best)) in true_types.iter().zip(&rows) {
        audit.min_ir = audit.min_ir.min(own);
        if gain > audit.max_gain {
            audit.max_gain = gain;
            audit.worst_true = g;
            audit.worst_report = mech.gamma_grid[best];
        }
    }
    Ok(audit)
}
