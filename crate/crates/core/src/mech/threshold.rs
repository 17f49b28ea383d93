use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MechError;
use crate::model::JointModel;
use crate::numerics::{bisect_root, DEFAULT_ROOT_TOL};

/// Points per support at which single crossing is checked while solving.
const CROSSING_CHECKS: usize = 64;

/// Per-good option menu on a `gamma` grid: strike prices and upfront fees.
/// A type between grid points is served the menu of the grid point below.
///
/// Where the virtual value is positive on the whole support the option is
/// always exercised, and any strike at or below the bottom of the support
/// gives truthful types the same allocation. Such strikes are set to the
/// lower of the support bottom and the previous grid point's strike, which
/// keeps strikes nonincreasing in `gamma` and misreports unprofitable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMechanism {
    pub gamma_grid: Vec<f64>,
    /// `strikes[i][j]` is the strike of good `j` at `gamma_grid[i]`.
    pub strikes: Vec<Vec<f64>>,
    /// Marks strikes pinned at the top of the support; those options are
    /// exercised only strictly above it, i.e. never.
    pub never_sell: Vec<Vec<bool>>,
    /// Upfront fee per grid point; empty until filled.
    pub upfront: Vec<f64>,
}

/// Uniform grid of `points` types over the prior support.
pub fn uniform_gamma_grid(model: &JointModel, points: usize) -> Vec<f64> {
    let (lo, hi) = model.gamma_range();
    if points < 2 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

pub(crate) fn check_grid_span(model: &JointModel, grid: &[f64]) -> Result<(), MechError> {
    let (lo, hi) = model.gamma_range();
    let tol = 1e-12 * (hi - lo);
    if (grid[0] - lo).abs() > tol || grid[grid.len() - 1] > hi + tol {
        return Err(MechError::InvalidGrid(format!("grid must start at {lo} and stay within {hi}")));
    }
    Ok(())
}

/// `phi^j = theta^j + (F^j_gamma / f^j) (1 - G) / g`.
pub fn virtual_value(model: &JointModel, j: usize, gamma: f64, theta_j: f64) -> Result<f64, MechError> {
    let hazard = model.hazard(gamma)?;
    if hazard == 0.0 {
        if !(model.marginals[j].pdf(theta_j, gamma) > 0.0) {
            return Err(crate::model::ModelError::DensityZero(format!("f^{j}({theta_j} | {gamma}) = 0")).into());
        }
        return Ok(theta_j);
    }
    Ok(theta_j + model.marginal_impulse(j, theta_j, gamma)? * hazard)
}

/// Virtual value with the argument pulled just inside the support, so the
/// support edges see the interior limit.
fn interior_virtual_value(model: &JointModel, j: usize, gamma: f64, x: f64) -> Result<f64, MechError> {
    let (lo, hi) = model.marginals[j].support(gamma);
    let eps = 1e-13 * (hi - lo);
    virtual_value(model, j, gamma, x.clamp(lo + eps, hi - eps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cut {
    Bottom(f64),
    Interior(f64),
    Top(f64),
}

fn solve_one(model: &JointModel, j: usize, gamma: f64) -> Result<Cut, MechError> {
    let (lo, hi) = model.marginals[j].support(gamma);
    let mut last_sign = false;
    for k in 0..=CROSSING_CHECKS {
        let x = lo + (hi - lo) * k as f64 / CROSSING_CHECKS as f64;
        let nonneg = interior_virtual_value(model, j, gamma, x)? >= 0.0;
        if last_sign && !nonneg {
            return Err(MechError::RegularityViolation(format!(
                "virtual value of good {j} crosses zero downward at gamma={gamma}, theta={x}"
            )));
        }
        last_sign = nonneg;
    }
    let phi_lo = interior_virtual_value(model, j, gamma, lo)?;
    if phi_lo >= 0.0 {
        return Ok(Cut::Bottom(lo));
    }
    let phi_hi = interior_virtual_value(model, j, gamma, hi)?;
    if phi_hi < 0.0 {
        return Ok(Cut::Top(hi));
    }
    let tol = DEFAULT_ROOT_TOL.min(1e-12 * (hi - lo).max(1.0));
    let g = |x: f64| interior_virtual_value(model, j, gamma, x).unwrap_or(f64::NAN);
    Ok(Cut::Interior(bisect_root(g, lo, hi, tol)?))
}

/// Strike prices `p^j(gamma)` at the zero of `phi^j(gamma, .)`, clipped to
/// the support when the virtual value has one sign throughout.
pub fn solve_thresholds(model: &JointModel, gamma_grid: &[f64]) -> Result<ThresholdMechanism, MechError> {
    if gamma_grid.is_empty() || gamma_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MechError::InvalidGrid("gamma grid must be nonempty and increasing".into()));
    }
    check_grid_span(model, gamma_grid)?;
    let rows: Vec<Vec<Cut>> = gamma_grid
        .par_iter()
        .map(|&g| (0..model.dim()).map(|j| solve_one(model, j, g)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let mut strikes: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let p = row
            .iter()
            .enumerate()
            .map(|(j, cut)| match *cut {
                Cut::Bottom(lo) if i > 0 => lo.min(strikes[i - 1][j]),
                Cut::Bottom(x) | Cut::Interior(x) | Cut::Top(x) => x,
            })
            .collect();
        strikes.push(p);
    }
    Ok(ThresholdMechanism {
        gamma_grid: gamma_grid.to_vec(),
        strikes,
        never_sell: rows.iter().map(|r| r.iter().map(|c| matches!(c, Cut::Top(_))).collect()).collect(),
        upfront: Vec::new(),
    })
}

impl ThresholdMechanism {
    pub fn dim(&self) -> usize {
        self.strikes.first().map_or(0, Vec::len)
    }

    /// Index of the menu serving type `gamma`.
    pub fn menu_index(&self, gamma: f64) -> usize {
        self.gamma_grid.partition_point(|&g| g <= gamma).saturating_sub(1)
    }

    /// Exercise cutoffs on the support: strikes clamped to `[theta_lo, theta_hi](gamma_i)`.
    pub fn thresholds(&self, model: &JointModel) -> Vec<Vec<f64>> {
        self.gamma_grid
            .iter()
            .zip(&self.strikes)
            .map(|(&g, p)| p.iter().zip(&model.marginals).map(|(&x, m)| {
                let (lo, hi) = m.support(g);
                x.clamp(lo, hi)
            }).collect())
            .collect()
    }

    /// Exercise decision of good `j` under menu `i`.
    pub fn exercises(&self, i: usize, j: usize, theta_j: f64) -> bool {
        if self.never_sell[i][j] {
            theta_j > self.strikes[i][j]
        } else {
            theta_j >= self.strikes[i][j]
        }
    }

    pub fn allocation_at(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        (0..theta.len()).map(|j| if self.exercises(i, j, theta[j]) { 1.0 } else { 0.0 }).collect()
    }

    pub fn allocation(&self, gamma: f64, theta: &[f64]) -> Vec<f64> {
        self.allocation_at(self.menu_index(gamma), theta)
    }

    pub fn utility_at(&self, i: usize, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.strikes[i]).map(|(&x, &p)| (x - p).max(0.0)).sum()
    }

    pub fn transfer_t2_at(&self, i: usize, theta: &[f64]) -> f64 {
        (0..theta.len()).filter(|&j| self.exercises(i, j, theta[j])).map(|j| self.strikes[i][j]).sum()
    }

    /// Theta-axis breakpoints at the strikes of menu `i`.
    pub fn breaks_at(&self, i: usize) -> Vec<Vec<f64>> {
        self.strikes[i].iter().map(|&p| vec![p]).collect()
    }

    /// `gamma, t1, p_1..p_n, x_1..x_n` rows: exercise cutoffs on the support
    /// followed by the strike prices charged.
    pub fn to_csv(&self, model: &JointModel) -> String {
        let n = self.dim();
        let mut out = String::from("gamma,t1");
        for j in 1..=n {
            out.push_str(&format!(",p_{j}"));
        }
        for j in 1..=n {
            out.push_str(&format!(",x_{j}"));
        }
        out.push('\n');
        let cutoffs = self.thresholds(model);
        for (i, g) in self.gamma_grid.iter().enumerate() {
            let mut fields = vec![*g, self.upfront.get(i).copied().unwrap_or(f64::NAN)];
            fields.extend(&cutoffs[i]);
            fields.extend(&self.strikes[i]);
            let row: Vec<String> = fields.iter().map(|&v| crate::fmt_num(v)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses [`Self::to_csv`] output. Without `x_j` columns the cutoffs
    /// `p_j` are taken as the strikes. Strikes at or above the top of the
    /// support are read as never-sell.
    pub fn from_csv(model: &JointModel, text: &str) -> Result<Self, MechError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| MechError::Parse("empty file".into()))?.split(',').map(str::trim).collect();
        let n = model.dim();
        let p_cols: Vec<String> = (1..=n).map(|j| format!("p_{j}")).collect();
        let x_cols: Vec<String> = (1..=n).map(|j| format!("x_{j}")).collect();
        let with_x = header.len() == 2 + 2 * n;
        if !(header.len() == n + 2 || with_x)
            || header[0] != "gamma"
            || header[1] != "t1"
            || header[2..2 + n] != p_cols[..]
            || (with_x && header[2 + n..] != x_cols[..])
        {
            return Err(MechError::Parse(format!("expected header gamma,t1,p_1..p_{n}[,x_1..x_{n}]")));
        }
        let mut mech = ThresholdMechanism { gamma_grid: vec![], strikes: vec![], never_sell: vec![], upfront: vec![] };
        for (row, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| MechError::Parse(format!("row {}: {e}", row + 1)))?;
            if vals.len() != header.len() {
                return Err(MechError::Parse(format!("row {} has {} fields", row + 1, vals.len())));
            }
            let g = vals[0];
            let strikes = if with_x { vals[2 + n..].to_vec() } else { vals[2..2 + n].to_vec() };
            mech.gamma_grid.push(g);
            mech.upfront.push(vals[1]);
            mech.never_sell.push((0..n).map(|j| strikes[j] >= model.marginals[j].support(g).1).collect());
            mech.strikes.push(strikes);
        }
        if mech.gamma_grid.is_empty() || mech.gamma_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MechError::InvalidGrid("gamma column must be increasing".into()));
        }
        check_grid_span(model, &mech.gamma_grid)?;
        if mech.upfront.iter().any(|t| t.is_nan()) {
            mech.upfront.clear();
        }
        Ok(mech)
    }
}
