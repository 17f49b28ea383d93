use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::OracleError;

/// Row sense for [`LinearProgram`] constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A maximization problem over bounded or free real variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// Largest row or bound violation of `x`.
    pub primal_residual: f64,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, objective: f64, bounds: (f64, f64)) -> usize {
        self.objective.push(objective);
        self.bounds.push(bounds);
        self.objective.len() - 1
    }

    /// Adds a row, merging repeated variables.
    pub fn add_row(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, sense: Sense, rhs: f64) {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (v, c) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        merged.sort_by_key(|&(v, _)| v);
        self.rows.push(Row { terms: merged, sense, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn row_activity(&self, row: &Row, x: &[f64]) -> f64 {
        row.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| {
            let a = self.row_activity(r, x);
            match r.sense {
                Sense::Le => (a - r.rhs).max(0.0),
                Sense::Ge => (r.rhs - a).max(0.0),
                Sense::Eq => (a - r.rhs).abs(),
            }
        });
        let bounds = self.bounds.iter().zip(x).map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

/// Maximizes `objective . x` subject to the rows and bounds.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, OracleError> {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = lp.objective.iter().zip(&lp.bounds).map(|(&c, &b)| problem.add_var(c, b)).collect();
    for row in &lp.rows {
        let op = match row.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(row.terms.iter().map(|&(v, c)| (vars[v], c)), op, row.rhs);
    }
    let outcome = problem.solve().map_err(|e| match e {
        microlp::Error::Infeasible => OracleError::Infeasible,
        microlp::Error::Unbounded => OracleError::Unbounded,
        other => OracleError::Solver(other.to_string()),
    })?;
    let solution = outcome.into_solution().map_err(|_| OracleError::Solver("solve interrupted".into()))?;
    let x: Vec<f64> = vars.iter().map(|&v| solution.var_value(v)).collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { value, primal_residual: lp.residual(&x), x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bounded_variable() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, (0.0, f64::INFINITY));
        lp.add_row([(x, 1.0)], Sense::Le, 1.0);
        let s = lp_solve(&lp).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transport_matches_enumeration() {
        // Two sources (3, 4), two sinks (2, 5), unit costs [[4, 6], [5, 3]]; minimize cost.
        let cost = [[4.0, 6.0], [5.0, 3.0]];
        let supply = [3.0, 4.0];
        let demand = [2.0, 5.0];
        let mut lp = LinearProgram::new();
        let x: Vec<Vec<usize>> =
            (0..2).map(|i| (0..2).map(|j| lp.add_var(-cost[i][j], (0.0, f64::INFINITY))).collect()).collect();
        for i in 0..2 {
            lp.add_row((0..2).map(|j| (x[i][j], 1.0)), Sense::Eq, supply[i]);
        }
        for j in 0..2 {
            lp.add_row((0..2).map(|i| (x[i][j], 1.0)), Sense::Eq, demand[j]);
        }
        let s = lp_solve(&lp).unwrap();
        // One free flow a = x00 in [0, 2]; cost is linear in a.
        let best = (0..=2)
            .map(|a| {
                let a = a as f64;
                let (x00, x01) = (a, 3.0 - a);
                let (x10, x11) = (2.0 - a, 5.0 - x01);
                cost[0][0] * x00 + cost[0][1] * x01 + cost[1][0] * x10 + cost[1][1] * x11
            })
            .fold(f64::INFINITY, f64::min);
        assert!((-s.value - best).abs() < 1e-9, "{} vs {best}", -s.value);
        assert!(s.primal_residual < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, (0.0, 1.0));
        lp.add_row([(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(lp_solve(&lp), Err(OracleError::Infeasible));

        let mut lp = LinearProgram::new();
        lp.add_var(1.0, (0.0, f64::INFINITY));
        assert_eq!(lp_solve(&lp), Err(OracleError::Unbounded));
    }

    #[test]
    fn repeated_terms_merge() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, (0.0, 10.0));
        lp.add_row([(x, 1.0), (x, 1.0)], Sense::Le, 3.0);
        assert_eq!(lp.rows[0].terms, vec![(x, 2.0)]);
        assert!((lp_solve(&lp).unwrap().value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn reruns_are_identical() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(1.0, (0.0, 1.0));
        let b = lp.add_var(1.0, (0.0, 1.0));
        lp.add_row([(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        let first = lp_solve(&lp).unwrap();
        for _ in 0..5 {
            assert_eq!(lp_solve(&lp).unwrap(), first);
        }
    }
}
