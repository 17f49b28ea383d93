use serde::{Deserialize, Serialize};

use super::instance::{flatten, unflatten, DiscreteInstance};
use super::OracleError;
use crate::mech::ThresholdMechanism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Simultaneous,
    Sequential,
    Relaxed,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Simultaneous => "simultaneous",
            Regime::Sequential => "sequential",
            Regime::Relaxed => "relaxed",
        }
    }
}

/// Allocation and transfer tables. For the relaxed regime the cells are
/// leaves of the orthogonalized shock partition and `t2` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMechanism {
    pub regime: Regime,
    /// `q[i][c][j]`.
    pub q: Vec<Vec<Vec<f64>>>,
    pub t1: Vec<f64>,
    /// `t2[i][c]`.
    pub t2: Vec<Vec<f64>>,
}

impl DiscreteMechanism {
    pub fn zero(regime: Regime, types: usize, cells: usize, goods: usize) -> Self {
        Self {
            regime,
            q: vec![vec![vec![0.0; goods]; cells]; types],
            t1: vec![0.0; types],
            t2: vec![vec![0.0; cells]; types],
        }
    }

    fn shape_matches(&self, types: usize, cells: usize, goods: usize) -> bool {
        self.t1.len() == types
            && self.q.len() == types
            && self.t2.len() == types
            && self.q.iter().all(|r| r.len() == cells && r.iter().all(|v| v.len() == goods))
            && self.t2.iter().all(|r| r.len() == cells)
    }

    /// `gamma_index,cell,q_1..q_n,t1,t2` rows.
    pub fn to_csv(&self) -> String {
        let n = self.q.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut out = String::from("gamma_index,cell");
        for j in 1..=n {
            out.push_str(&format!(",q_{j}"));
        }
        out.push_str(",t1,t2\n");
        for (i, rows) in self.q.iter().enumerate() {
            for (c, q) in rows.iter().enumerate() {
                out.push_str(&format!("{i},{c}"));
                for &v in q.iter().chain([&self.t1[i], &self.t2[i][c]]) {
                    out.push(',');
                    out.push_str(&crate::fmt_num(v));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Revenue and largest constraint violations of a mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub revenue: f64,
    pub ic2_violation: f64,
    pub ir_violation: f64,
    pub ic1_violation: f64,
    pub allocation_violation: f64,
    pub measurability_violation: f64,
}

impl Evaluation {
    pub fn max_violation(&self) -> f64 {
        [self.ic2_violation, self.ir_violation, self.ic1_violation, self.allocation_violation, self.measurability_violation]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Relative slack used when preferring the truthful report among ties.
const TIE: f64 = 1e-12;

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE * (1.0 + incumbent.abs())
}

pub(crate) struct Tables<'a> {
    pub inst: &'a DiscreteInstance,
    pub thetas: Vec<Vec<f64>>,
    /// `prefix[i][l][p]`: mass under type `i` of the length-`l` history `p`.
    prefix: Vec<Vec<Vec<f64>>>,
}

impl<'a> Tables<'a> {
    pub fn new(inst: &'a DiscreteInstance) -> Self {
        let dims = inst.dims();
        let prefix = inst
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
        Self { inst, thetas: inst.thetas(), prefix }
    }

    fn ex_post(&self, mech: &DiscreteMechanism, report_type: usize, true_cell: usize, report_cell: usize) -> f64 {
        let q = &mech.q[report_type][report_cell];
        self.thetas[true_cell].iter().zip(q).map(|(t, q)| t * q).sum::<f64>() - mech.t2[report_type][report_cell]
    }

    pub fn interim(&self, mech: &DiscreteMechanism, i: usize) -> f64 {
        let f = &self.inst.pmf[i];
        (0..f.len()).map(|c| f[c] * self.ex_post(mech, i, c, c)).sum::<f64>() - mech.t1[i]
    }

    /// Best joint continuation misreport for type `i` claiming `k`:
    /// cellwise argmax, truthful on ties. Returns the payoff and the map.
    pub fn simultaneous_deviation(&self, mech: &DiscreteMechanism, i: usize, k: usize) -> (f64, Vec<usize>) {
        let f = &self.inst.pmf[i];
        let cells = f.len();
        let mut value = -mech.t1[k];
        let mut map = Vec::with_capacity(cells);
        for c in 0..cells {
            let mut best = (c, self.ex_post(mech, k, c, c));
            for r in 0..cells {
                let v = self.ex_post(mech, k, c, r);
                if better(v, best.1) {
                    best = (r, v);
                }
            }
            value += f[c] * best.1;
            map.push(best.0);
        }
        (value, map)
    }

    /// Best adapted misreport for type `i` claiming `k`: good `j`'s report
    /// may depend only on true values of goods `1..=j`. Found by backward
    /// induction; the payoff and the induced full-history map are returned.
    pub fn adapted_deviation(&self, mech: &DiscreteMechanism, i: usize, k: usize) -> (f64, Vec<usize>) {
        let dims = self.inst.dims();
        let mut map = vec![0; self.inst.cells()];
        let mut truth = Vec::new();
        let mut report = Vec::new();
        let (v, paths) = self.adapted_step(mech, i, k, &dims, &mut truth, &mut report, 1.0);
        for (c, r) in paths {
            map[c] = r;
        }
        (v - mech.t1[k], map)
    }

    /// Expected continuation payoff given true and reported prefixes, along
    /// with the (true cell, reported cell) pairs of the chosen strategy.
    #[allow(clippy::too_many_arguments)]
    fn adapted_step(
        &self,
        mech: &DiscreteMechanism,
        i: usize,
        k: usize,
        dims: &[usize],
        truth: &mut Vec<usize>,
        report: &mut Vec<usize>,
        prefix_mass: f64,
    ) -> (f64, Vec<(usize, usize)>) {
        let level = truth.len();
        if level == dims.len() {
            let (c, r) = (flatten(dims, truth), flatten(dims, report));
            return (self.ex_post(mech, k, c, r), vec![(c, r)]);
        }
        let mut total = 0.0;
        let mut paths = Vec::new();
        for c in 0..dims[level] {
            truth.push(c);
            let mass = self.prefix_mass(i, dims, truth);
            if mass > 0.0 {
                let mut best: Option<(usize, f64, Vec<(usize, usize)>)> = None;
                let order = std::iter::once(c).chain((0..dims[level]).filter(|&r| r != c));
                for r in order {
                    report.push(r);
                    let (v, p) = self.adapted_step(mech, i, k, dims, truth, report, mass);
                    report.pop();
                    if best.as_ref().is_none_or(|(_, b, _)| better(v, *b)) {
                        best = Some((r, v, p));
                    }
                }
                let (_, v, p) = best.expect("at least one report");
                total += mass / prefix_mass * v;
                paths.extend(p);
            }
            truth.pop();
        }
        (total, paths)
    }

    fn prefix_mass(&self, i: usize, dims: &[usize], prefix: &[usize]) -> f64 {
        self.prefix[i][prefix.len()][flatten(&dims[..prefix.len()], prefix)]
    }
}

/// Revenue and constraint residuals of a simultaneous or sequential
/// mechanism on `inst`. Sequential mechanisms are checked against adapted
/// deviations only, including misreports of `theta` alone.
pub fn evaluate_mechanism(inst: &DiscreteInstance, mech: &DiscreteMechanism) -> Result<Evaluation, OracleError> {
    let (m, cells, n) = (inst.types(), inst.cells(), inst.goods());
    if mech.regime == Regime::Relaxed || !mech.shape_matches(m, cells, n) {
        return Err(OracleError::ShapeMismatch(format!(
            "expected a simultaneous or sequential mechanism over {m} types, {cells} cells, {n} goods"
        )));
    }
    let tab = Tables::new(inst);
    let revenue = (0..m)
        .map(|i| inst.gamma_prob[i] * (mech.t1[i] + inst.pmf[i].iter().zip(&mech.t2[i]).map(|(f, t)| f * t).sum::<f64>()))
        .sum();
    let utility: Vec<f64> = (0..m).map(|i| tab.interim(mech, i)).collect();
    let ir_violation = utility.iter().map(|u| (-u).max(0.0)).fold(0.0, f64::max);
    let allocation_violation =
        mech.q.iter().flatten().flatten().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
    let mut ic1 = 0.0f64;
    let mut ic2 = 0.0f64;
    let mut measurability = 0.0f64;
    let dims = inst.dims();
    for i in 0..m {
        match mech.regime {
            Regime::Simultaneous => {
                for c in 0..cells {
                    let truth = tab.ex_post(mech, i, c, c);
                    for r in 0..cells {
                        ic2 = ic2.max(tab.ex_post(mech, i, c, r) - truth);
                    }
                }
            }
            _ => {
                ic2 = ic2.max(tab.adapted_deviation(mech, i, i).0 - utility[i]);
                for c in 0..cells {
                    let ci = unflatten(&dims, c);
                    for c2 in 0..cells {
                        let di = unflatten(&dims, c2);
                        for j in 0..n {
                            if ci[..=j] == di[..=j] {
                                measurability = measurability.max((mech.q[i][c][j] - mech.q[i][c2][j]).abs());
                            }
                        }
                    }
                }
            }
        }
        for k in (0..m).filter(|&k| k != i) {
            let dev = match mech.regime {
                Regime::Simultaneous => tab.simultaneous_deviation(mech, i, k).0,
                _ => tab.adapted_deviation(mech, i, k).0,
            };
            ic1 = ic1.max(dev - utility[i]);
        }
    }
    Ok(Evaluation {
        revenue,
        ic2_violation: ic2.max(0.0),
        ir_violation,
        ic1_violation: ic1.max(0.0),
        allocation_violation,
        measurability_violation: measurability,
    })
}

/// The continuum option menu restricted to the instance's types and cells.
pub fn project_threshold(inst: &DiscreteInstance, mech: &ThresholdMechanism) -> Result<DiscreteMechanism, OracleError> {
    if mech.upfront.len() != mech.gamma_grid.len() || mech.dim() != inst.goods() {
        return Err(OracleError::ShapeMismatch("menu needs upfront fees and one strike per good".into()));
    }
    let thetas = inst.thetas();
    let mut out = DiscreteMechanism::zero(Regime::Simultaneous, inst.types(), inst.cells(), inst.goods());
    for (i, &g) in inst.gamma.iter().enumerate() {
        let idx = mech.menu_index(g);
        out.t1[i] = mech.upfront[idx];
        for (c, theta) in thetas.iter().enumerate() {
            out.q[i][c] = mech.allocation_at(idx, theta);
            out.t2[i][c] = mech.transfer_t2_at(idx, theta);
        }
    }
    Ok(out)
}
