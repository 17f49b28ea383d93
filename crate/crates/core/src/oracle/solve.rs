use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instance::{flatten, unflatten, DiscreteInstance};
use super::lp::{lp_solve, LinearProgram, Sense};
use super::mechanism::{evaluate_mechanism, DiscreteMechanism, Regime, Tables};
use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub round_cap: usize,
    /// Violation below which a deviation constraint counts as satisfied.
    pub tolerance: f64,
    /// Transfer bound, in multiples of the full surplus, for all but the final solve.
    pub transfer_cap: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { round_cap: 200, tolerance: 1e-9, transfer_cap: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    pub round: usize,
    pub gamma: usize,
    pub claimed: usize,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub regime: Regime,
    pub value: f64,
    #[serde(skip)]
    pub mechanism: Option<DiscreteMechanism>,
    pub iterations: usize,
    /// LP value after each round; nonincreasing as cuts accumulate.
    pub round_values: Vec<f64>,
    pub cuts: Vec<CutRecord>,
    /// Largest violation in a fresh separation pass over all type pairs.
    pub final_violation: f64,
    pub status: String,
}

struct Layout {
    regime: Regime,
    dims: Vec<usize>,
    cells: usize,
    goods: usize,
    /// Start of each good's allocation block.
    q_offsets: Vec<usize>,
    u: usize,
    t2: usize,
}

impl Layout {
    fn new(inst: &DiscreteInstance, regime: Regime) -> Self {
        let dims = inst.dims();
        let (m, cells, goods) = (inst.types(), inst.cells(), inst.goods());
        let mut q_offsets = Vec::with_capacity(goods);
        let mut next = 0;
        for j in 0..goods {
            q_offsets.push(next);
            next += m * match regime {
                Regime::Sequential => dims[..=j].iter().product::<usize>(),
                _ => cells,
            };
        }
        Self { regime, dims, cells, goods, q_offsets, u: next, t2: next + m }
    }

    fn q(&self, i: usize, c: usize, j: usize) -> usize {
        match self.regime {
            Regime::Sequential => {
                let span: usize = self.dims[..=j].iter().product();
                let idx = unflatten(&self.dims, c);
                self.q_offsets[j] + i * span + flatten(&self.dims[..=j], &idx[..=j])
            }
            _ => self.q_offsets[j] + i * self.cells + c,
        }
    }

    fn u(&self, i: usize) -> usize {
        self.u + i
    }

    fn t2(&self, i: usize, c: usize) -> usize {
        self.t2 + i * self.cells + c
    }
}

/// A deviation constraint: type `gamma` claims `claimed` and then reports
/// cell `map[c]` when the true cell is `c`.
#[derive(Debug, Clone)]
struct Cut {
    gamma: usize,
    claimed: usize,
    map: Vec<usize>,
}

/// Variables are allocations, interim utilities `U` and ex post transfers
/// `t2`; the upfront fee is `t1 = E[theta . q - t2] - U`, so participation
/// is the bound `U >= 0`.
fn build_lp(inst: &DiscreteInstance, tab: &Tables, layout: &Layout, cuts: &[Cut], cap: Option<f64>) -> LinearProgram {
    let m = inst.types();
    let mut lp = LinearProgram::new();
    let mut objective = vec![0.0; layout.u];
    for i in 0..m {
        for c in 0..layout.cells {
            for j in 0..layout.goods {
                objective[layout.q(i, c, j)] += inst.gamma_prob[i] * inst.pmf[i][c] * tab.thetas[c][j];
            }
        }
    }
    for w in objective {
        lp.add_var(w, (0.0, 1.0));
    }
    let cap = cap.unwrap_or(f64::INFINITY);
    for i in 0..m {
        lp.add_var(-inst.gamma_prob[i], (0.0, cap));
    }
    for _ in 0..m * layout.cells {
        lp.add_var(0.0, (-cap, cap));
    }

    let payoff = |i: usize, true_cell: usize, report_cell: usize, weight: f64| {
        let theta = &tab.thetas[true_cell];
        (0..layout.goods)
            .map(move |j| (layout.q(i, report_cell, j), weight * theta[j]))
            .chain(std::iter::once((layout.t2(i, report_cell), -weight)))
    };

    if layout.regime == Regime::Simultaneous {
        for i in 0..m {
            for c in 0..layout.cells {
                for r in (0..layout.cells).filter(|&r| r != c) {
                    lp.add_row(payoff(i, c, c, 1.0).chain(payoff(i, c, r, -1.0)), Sense::Ge, 0.0);
                }
            }
        }
    }
    for cut in cuts {
        let (f, g) = (&inst.pmf[cut.gamma], &inst.pmf[cut.claimed]);
        let k = cut.claimed;
        let deviation = (0..layout.cells).filter(|&c| f[c] > 0.0).flat_map(|c| payoff(k, c, cut.map[c], f[c]));
        let fee = (0..layout.cells).filter(|&c| g[c] > 0.0).flat_map(|c| payoff(k, c, c, -g[c]));
        let utilities = [(layout.u(k), 1.0), (layout.u(cut.gamma), -1.0)];
        lp.add_row(deviation.chain(fee).chain(utilities), Sense::Le, 0.0);
    }
    lp
}

fn extract(inst: &DiscreteInstance, tab: &Tables, layout: &Layout, x: &[f64]) -> DiscreteMechanism {
    let mut mech = DiscreteMechanism::zero(layout.regime, inst.types(), layout.cells, layout.goods);
    for i in 0..inst.types() {
        for c in 0..layout.cells {
            mech.t2[i][c] = x[layout.t2(i, c)];
            for j in 0..layout.goods {
                mech.q[i][c][j] = x[layout.q(i, c, j)];
            }
        }
        mech.t1[i] = 0.0;
        mech.t1[i] = tab.interim(&mech, i) - x[layout.u(i)];
    }
    mech
}

fn separate(inst: &DiscreteInstance, tab: &Tables, mech: &DiscreteMechanism) -> Vec<(Cut, f64)> {
    let m = inst.types();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).map(move |k| (i, k)))
        .filter(|&(i, k)| i != k || mech.regime == Regime::Sequential)
        .collect();
    pairs
        .par_iter()
        .map(|&(i, k)| {
            let (value, map) = match mech.regime {
                Regime::Sequential => tab.adapted_deviation(mech, i, k),
                _ => tab.simultaneous_deviation(mech, i, k),
            };
            (Cut { gamma: i, claimed: k, map }, value - tab.interim(mech, i))
        })
        .collect()
}

fn cutting_planes(inst: &DiscreteInstance, regime: Regime, opts: &OracleOptions) -> Result<SolveReport, OracleError> {
    inst.validate()?;
    let tab = Tables::new(inst);
    let layout = Layout::new(inst, regime);
    let cap = opts.transfer_cap * inst.full_surplus().max(1.0);
    let mut cuts: Vec<Cut> = Vec::new();
    let mut log = Vec::new();
    let mut round_values = Vec::new();
    let mut capped = true;
    let mut round = 0;
    loop {
        let lp = build_lp(inst, &tab, &layout, &cuts, capped.then_some(cap));
        let sol = lp_solve(&lp)?;
        let mech = extract(inst, &tab, &layout, &sol.x);
        round_values.push(sol.value);
        let found = separate(inst, &tab, &mech);
        let worst = found.iter().map(|(_, v)| *v).fold(0.0, f64::max);
        let violated: Vec<(Cut, f64)> = found.into_iter().filter(|(_, v)| *v > opts.tolerance).collect();
        if violated.is_empty() {
            if capped {
                capped = false;
                continue;
            }
            let check = evaluate_mechanism(inst, &mech)?;
            return Ok(SolveReport {
                regime,
                value: check.revenue,
                mechanism: Some(mech),
                iterations: round,
                round_values,
                cuts: log,
                final_violation: worst.max(check.max_violation()),
                status: "optimal".into(),
            });
        }
        round += 1;
        if round > opts.round_cap {
            return Err(OracleError::NonConvergence { rounds: opts.round_cap, violation: worst });
        }
        for (cut, v) in violated {
            log.push(CutRecord { round, gamma: cut.gamma, claimed: cut.claimed, violation: v });
            cuts.push(cut);
        }
    }
}

/// Optimal mechanism when all values are reported at once: every `theta`
/// misreport is constrained directly and joint (`gamma`, `theta`)
/// misreports are added as violated cuts.
pub fn solve_simultaneous(inst: &DiscreteInstance) -> Result<SolveReport, OracleError> {
    solve_simultaneous_with(inst, &OracleOptions::default())
}

pub fn solve_simultaneous_with(inst: &DiscreteInstance, opts: &OracleOptions) -> Result<SolveReport, OracleError> {
    cutting_planes(inst, Regime::Simultaneous, opts)
}

/// Optimal mechanism when good `j` is allocated after only values
/// `1..=j` are known: allocations depend on history prefixes and only
/// adapted misreport strategies are constrained.
pub fn solve_sequential(inst: &DiscreteInstance) -> Result<SolveReport, OracleError> {
    solve_sequential_with(inst, &OracleOptions::default())
}

pub fn solve_sequential_with(inst: &DiscreteInstance, opts: &OracleOptions) -> Result<SolveReport, OracleError> {
    cutting_planes(inst, Regime::Sequential, opts)
}
