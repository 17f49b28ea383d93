use rayon::prelude::*;
use serde::Serialize;

use super::{virtual_value, MechError, ThresholdMechanism};
use crate::model::{JointModel, ModelError, QuadOptions};
use crate::numerics::gauss_rule;

/// Fills `mech.upfront` so that the lowest type gets zero interim utility
/// and every type's local downward constraint binds.
///
/// Within a grid cell the menu is fixed, so the rent integral over the cell
/// collapses to the change of `E[u_i | gamma]` across it.
pub fn upfront_t1(model: &JointModel, mech: &mut ThresholdMechanism, opts: &QuadOptions) -> Result<(), MechError> {
    let n = mech.gamma_grid.len();
    let ends: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let br = mech.breaks_at(i);
            let here = model.expect_theta(mech.gamma_grid[i], &br, opts, |t| mech.utility_at(i, t))?;
            let next = match mech.gamma_grid.get(i + 1) {
                Some(&g) => model.expect_theta(g, &br, opts, |t| mech.utility_at(i, t))?,
                None => f64::NAN,
            };
            Ok((here, next))
        })
        .collect::<Result<_, ModelError>>()?;
    let mut rent = 0.0;
    mech.upfront = Vec::with_capacity(n);
    for (here, next) in ends {
        mech.upfront.push(here - rent);
        rent += next - here;
    }
    Ok(())
}

fn require_upfront(mech: &ThresholdMechanism) -> Result<(), MechError> {
    if mech.upfront.len() != mech.gamma_grid.len() {
        return Err(MechError::UpfrontMissing);
    }
    Ok(())
}

/// `U(gamma) = E[u(gamma, theta) | gamma] - t1(gamma)`.
pub fn interim_utility(model: &JointModel, mech: &ThresholdMechanism, gamma: f64, opts: &QuadOptions) -> Result<f64, MechError> {
    require_upfront(mech)?;
    let i = mech.menu_index(gamma);
    let eu = model.expect_theta(gamma, &mech.breaks_at(i), opts, |t| mech.utility_at(i, t))?;
    Ok(eu - mech.upfront[i])
}

/// Gauss nodes and weights over every menu cell, tagged with the cell's
/// menu index. The last grid point serves only the top type and carries no
/// mass.
fn gamma_nodes(model: &JointModel, mech: &ThresholdMechanism, opts: &QuadOptions) -> Result<Vec<(usize, f64, f64)>, MechError> {
    let (_, hi) = model.gamma_range();
    let grid = &mech.gamma_grid;
    let mut out = Vec::new();
    for i in 0..grid.len() {
        let end = grid.get(i + 1).copied().unwrap_or(hi);
        if end > grid[i] {
            let rule = gauss_rule(opts.gamma_order, grid[i], end)?;
            out.extend(rule.nodes.iter().zip(&rule.weights).map(|(&g, &w)| (i, g, w)));
        }
    }
    Ok(out)
}

/// Conditional moments under menu `i` at type `gamma`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    t2: f64,
    surplus: f64,
    virtual_surplus: f64,
    rent: f64,
}

fn moments(model: &JointModel, mech: &ThresholdMechanism, i: usize, g: f64, opts: &QuadOptions, impulse: bool) -> Result<Moments, MechError> {
    let br = mech.breaks_at(i);
    let mut m = Moments::default();
    let mut failure = None;
    let mut visit = |t: &[f64], w: f64| {
        for j in 0..t.len() {
            if mech.exercises(i, j, t[j]) {
                m.t2 += w * mech.strikes[i][j];
                m.surplus += w * t[j];
                if impulse {
                    match virtual_value(model, j, g, t[j]) {
                        Ok(phi) => m.virtual_surplus += w * phi,
                        Err(e) => failure = Some(e),
                    }
                }
            }
        }
    };
    if model.has_moving_support() {
        model.integrate_theta(g, &br, opts, &mut visit)?;
        m.rent = model.rent_density(g, &br, opts, |t| mech.utility_at(i, t))?;
    } else {
        let mut rent = 0.0;
        model.integrate_theta_scored(g, &br, opts, |t, w, s| {
            visit(t, w);
            rent += w * s * mech.utility_at(i, t);
        })?;
        m.rent = rent;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(m),
    }
}

/// Per-node contributions to the three revenue forms.
fn revenue_forms(model: &JointModel, mech: &ThresholdMechanism, opts: &QuadOptions, impulse: bool) -> Result<[f64; 3], MechError> {
    let nodes = gamma_nodes(model, mech, opts)?;
    let parts: Vec<[f64; 3]> = nodes
        .par_iter()
        .map(|&(i, g, w)| {
            let m = moments(model, mech, i, g, opts, impulse)?;
            let dens = w * model.prior.density(g);
            let t1 = mech.upfront.get(i).copied().unwrap_or(f64::NAN);
            Ok([
                dens * (t1 + m.t2),
                dens * m.surplus - w * model.prior.survival(g) * m.rent,
                dens * m.virtual_surplus,
            ])
        })
        .collect::<Result<_, MechError>>()?;
    let mut total = [0.0; 3];
    for p in parts {
        for k in 0..3 {
            total[k] += p[k];
        }
    }
    Ok(total)
}

/// `E[t1(gamma) + t2(gamma, theta)]`.
pub fn revenue_direct(model: &JointModel, mech: &ThresholdMechanism, opts: &QuadOptions) -> Result<f64, MechError> {
    require_upfront(mech)?;
    Ok(revenue_forms(model, mech, opts, false)?[0])
}

/// `E[theta . q - u (f_gamma / f) (1 - G) / g]`, written as
/// `int g E[theta . q | gamma] - (1 - G) int u f_gamma dtheta dgamma`.
pub fn revenue_functional(model: &JointModel, mech: &ThresholdMechanism, opts: &QuadOptions) -> Result<f64, MechError> {
    Ok(revenue_forms(model, mech, opts, false)?[1])
}

/// `E[sum_j q^j phi^j(gamma, theta^j)]`.
pub fn revenue_impulse_form(model: &JointModel, mech: &ThresholdMechanism, opts: &QuadOptions) -> Result<f64, MechError> {
    if !model.invariant_flag {
        return Err(ModelError::InvarianceRequired.into());
    }
    Ok(revenue_forms(model, mech, opts, true)?[2])
}

/// `E[sum_j max(theta^j, 0)]`, the efficient surplus.
pub fn full_surplus(model: &JointModel, opts: &QuadOptions) -> Result<f64, MechError> {
    let (lo, hi) = model.gamma_range();
    let rule = gauss_rule(opts.gamma_order.max(8), lo, hi)?;
    let zero = vec![vec![0.0]; model.dim()];
    let mut total = 0.0;
    for (&g, &w) in rule.nodes.iter().zip(&rule.weights) {
        total += w * model.prior.density(g) * model.expect_theta(g, &zero, opts, |t| t.iter().map(|x| x.max(0.0)).sum())?;
    }
    Ok(total)
}

/// The three revenue forms side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevenueReport {
    pub direct: f64,
    pub functional: f64,
    /// Absent when dependencies are not invariant.
    pub impulse: Option<f64>,
    pub functional_rel_residual: f64,
    pub impulse_rel_residual: Option<f64>,
}

pub fn revenue_report(model: &JointModel, mech: &ThresholdMechanism, opts: &QuadOptions) -> Result<RevenueReport, MechError> {
    require_upfront(mech)?;
    let [direct, functional, virt] = revenue_forms(model, mech, opts, model.invariant_flag)?;
    let impulse = model.invariant_flag.then_some(virt);
    let scale = direct.abs().max(1e-300);
    Ok(RevenueReport {
        direct,
        functional,
        impulse,
        functional_rel_residual: (functional - direct).abs() / scale,
        impulse_rel_residual: impulse.map(|v| (v - direct).abs() / scale),
    })
}
