use serde::{Deserialize, Serialize};

use super::instance::{flatten, unflatten, DiscreteInstance};
use super::lp::{lp_solve, LinearProgram, Sense};
use super::mechanism::{DiscreteMechanism, Regime};
use super::solve::{OracleOptions, SolveReport};
use super::OracleError;

/// Box of the shock cube `[0,1]^n` on which every type's value vector is
/// constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockLeaf {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub mass: f64,
    /// Cell of the original grid per type.
    pub cell: Vec<usize>,
}

/// Instance with the shock `z` observed: values are `v(gamma, z)` on a
/// partition of `z` common to all types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalInstance {
    pub gamma: Vec<f64>,
    pub gamma_prob: Vec<f64>,
    pub leaves: Vec<ShockLeaf>,
    /// `v[i][leaf]`.
    pub v: Vec<Vec<Vec<f64>>>,
}

/// Breakpoints closer than this are merged.
const MERGE: f64 = 1e-14;

impl OrthogonalInstance {
    /// Sequential conditional-quantile map of each type's pmf. Good `j`'s
    /// shock selects its cell given the cells of goods before it; the shock
    /// axis is split wherever any type's conditional cdf jumps.
    pub fn from_instance(inst: &DiscreteInstance) -> Result<Self, OracleError> {
        inst.validate()?;
        let dims = inst.dims();
        let m = inst.types();
        // prefix[i][l][p]: mass of the length-l history p.
        let prefix: Vec<Vec<Vec<f64>>> = inst
            .pmf
            .iter()
            .map(|f| {
                (0..=dims.len())
                    .map(|l| {
                        let mut t = vec![0.0; dims[..l].iter().product()];
                        for (c, p) in f.iter().enumerate() {
                            t[flatten(&dims[..l], &unflatten(&dims, c)[..l])] += p;
                        }
                        t
                    })
                    .collect()
            })
            .collect();
        let mut leaves = Vec::new();
        let mut hist = vec![Vec::new(); m];
        split(&dims, &prefix, &mut hist, &mut Vec::new(), &mut Vec::new(), 1.0, &mut leaves);
        let thetas = inst.thetas();
        let v = (0..m).map(|i| leaves.iter().map(|l: &ShockLeaf| thetas[l.cell[i]].clone()).collect()).collect();
        Ok(Self { gamma: inst.gamma.clone(), gamma_prob: inst.gamma_prob.clone(), leaves, v })
    }

    pub fn types(&self) -> usize {
        self.gamma.len()
    }

    fn value_of(&self, i: usize, q: &[Vec<f64>]) -> f64 {
        self.leaves.iter().zip(&self.v[i]).zip(q).map(|((l, v), q)| l.mass * dot(v, q)).sum()
    }

    pub fn full_surplus(&self) -> f64 {
        (0..self.types())
            .map(|i| {
                self.gamma_prob[i]
                    * self.leaves.iter().zip(&self.v[i]).map(|(l, v)| l.mass * v.iter().map(|x| x.max(0.0)).sum::<f64>()).sum::<f64>()
            })
            .sum()
    }

    /// Revenue and the largest violation of participation and type-report
    /// constraints of a relaxed mechanism (allocations per leaf, fee `t1`).
    pub fn evaluate(&self, mech: &DiscreteMechanism) -> Result<(f64, f64), OracleError> {
        let m = self.types();
        if mech.q.len() != m || mech.t1.len() != m || mech.q.iter().any(|r| r.len() != self.leaves.len()) {
            return Err(OracleError::ShapeMismatch("relaxed mechanism must have one row per leaf".into()));
        }
        let revenue = (0..m).map(|i| self.gamma_prob[i] * mech.t1[i]).sum();
        let mut worst = 0.0f64;
        for i in 0..m {
            let own = self.value_of(i, &mech.q[i]) - mech.t1[i];
            worst = worst.max(-own);
            for k in (0..m).filter(|&k| k != i) {
                worst = worst.max(self.value_of(i, &mech.q[k]) - mech.t1[k] - own);
            }
        }
        Ok((revenue, worst))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn split(
    dims: &[usize],
    prefix: &[Vec<Vec<f64>>],
    hist: &mut Vec<Vec<usize>>,
    lo: &mut Vec<f64>,
    hi: &mut Vec<f64>,
    mass: f64,
    out: &mut Vec<ShockLeaf>,
) {
    let level = lo.len();
    if level == dims.len() {
        let cell = hist.iter().map(|h| flatten(dims, h)).collect();
        out.push(ShockLeaf { lo: lo.clone(), hi: hi.clone(), mass, cell });
        return;
    }
    let m = hist.len();
    // Conditional cdf steps of this good for every type.
    let steps: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let base = flatten(&dims[..level], &hist[i]) * dims[level];
            let total = prefix[i][level][flatten(&dims[..level], &hist[i])];
            let mut acc = 0.0;
            let mut s: Vec<f64> = (0..dims[level])
                .map(|k| {
                    acc += prefix[i][level + 1][base + k];
                    acc / total
                })
                .collect();
            *s.last_mut().unwrap() = 1.0;
            s
        })
        .collect();
    let mut cuts: Vec<f64> = steps.iter().flatten().copied().chain([0.0]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= MERGE);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        for i in 0..m {
            let k = steps[i].partition_point(|&s| s <= mid).min(dims[level] - 1);
            hist[i].push(k);
        }
        lo.push(a);
        hi.push(b);
        split(dims, prefix, hist, lo, hi, mass * (b - a), out);
        lo.pop();
        hi.pop();
        for h in hist.iter_mut() {
            h.pop();
        }
    }
}

/// Optimal mechanism when the shock is publicly observed: allocations per
/// leaf and a single fee per type, constrained by type-report and
/// participation constraints only.
pub fn solve_relaxed(inst: &OrthogonalInstance) -> Result<SolveReport, OracleError> {
    solve_relaxed_with(inst, &OracleOptions::default())
}

pub fn solve_relaxed_with(inst: &OrthogonalInstance, opts: &OracleOptions) -> Result<SolveReport, OracleError> {
    let cap = opts.transfer_cap * inst.full_surplus().max(1.0);
    let capped = solve_relaxed_lp(inst, Some(cap))?;
    let report = solve_relaxed_lp(inst, None)?;
    Ok(SolveReport { round_values: vec![capped.value, report.value], ..report })
}

fn solve_relaxed_lp(inst: &OrthogonalInstance, cap: Option<f64>) -> Result<SolveReport, OracleError> {
    let m = inst.types();
    let leaves = inst.leaves.len();
    let n = inst.v.first().and_then(|r| r.first()).map_or(0, Vec::len);
    let q = |i: usize, l: usize, j: usize| (i * leaves + l) * n + j;
    let t = |i: usize| m * leaves * n + i;
    let mut lp = LinearProgram::new();
    for _ in 0..m * leaves * n {
        lp.add_var(0.0, (0.0, 1.0));
    }
    let bound = cap.map_or((f64::NEG_INFINITY, f64::INFINITY), |c| (-c, c));
    for i in 0..m {
        lp.add_var(inst.gamma_prob[i], bound);
    }
    // Value to type `i` of the allocations offered to `k`, scaled by `sign`.
    let value = |i: usize, k: usize, sign: f64| {
        (0..leaves).flat_map(move |l| {
            let w = sign * inst.leaves[l].mass;
            (0..n).map(move |j| (q(k, l, j), w * inst.v[i][l][j]))
        })
    };
    for i in 0..m {
        lp.add_row(value(i, i, 1.0).chain([(t(i), -1.0)]), Sense::Ge, 0.0);
        for k in (0..m).filter(|&k| k != i) {
            let row = value(i, k, 1.0).chain([(t(k), -1.0)]).chain(value(i, i, -1.0)).chain([(t(i), 1.0)]);
            lp.add_row(row, Sense::Le, 0.0);
        }
    }
    let sol = lp_solve(&lp)?;
    let mut mech = DiscreteMechanism::zero(Regime::Relaxed, m, leaves, n);
    for i in 0..m {
        mech.t1[i] = sol.x[t(i)];
        for l in 0..leaves {
            for j in 0..n {
                mech.q[i][l][j] = sol.x[q(i, l, j)];
            }
        }
    }
    let (revenue, violation) = inst.evaluate(&mech)?;
    Ok(SolveReport {
        regime: Regime::Relaxed,
        value: revenue,
        mechanism: Some(mech),
        iterations: 0,
        round_values: vec![sol.value],
        cuts: Vec::new(),
        final_violation: violation.max(sol.primal_residual),
        status: "optimal".into(),
    })
}
