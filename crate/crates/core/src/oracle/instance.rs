use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::model::{FamilySpec, JointModel};

/// Cell counts for [`discretize`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub gamma_cells: usize,
    /// One count per good.
    pub theta_cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    #[serde(default)]
    pub family: Option<FamilySpec>,
    pub grid: GridSpec,
}

/// Finite types: `gamma` support with probabilities and, per `gamma`, a
/// pmf over the product grid of `theta` values (last good varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    pub gamma: Vec<f64>,
    pub gamma_prob: Vec<f64>,
    pub theta_grid: Vec<Vec<f64>>,
    pub pmf: Vec<Vec<f64>>,
    #[serde(default)]
    pub lineage: Option<Lineage>,
}

const MASS_TOL: f64 = 1e-12;

impl DiscreteInstance {
    pub fn new(
        gamma: Vec<f64>,
        gamma_prob: Vec<f64>,
        theta_grid: Vec<Vec<f64>>,
        pmf: Vec<Vec<f64>>,
    ) -> Result<Self, OracleError> {
        let inst = Self { gamma, gamma_prob, theta_grid, pmf, lineage: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidInstance(m));
        if self.gamma.is_empty() || self.gamma.len() != self.gamma_prob.len() || self.pmf.len() != self.gamma.len() {
            return bad("gamma support, probabilities and pmfs must have one entry per type".into());
        }
        if self.theta_grid.is_empty() || self.theta_grid.iter().any(|g| g.is_empty()) {
            return bad("every good needs at least one theta value".into());
        }
        let cells = self.cells();
        if let Some(i) = self.pmf.iter().position(|p| p.len() != cells) {
            return bad(format!("pmf {i} has the wrong length"));
        }
        let all = self.gamma_prob.iter().chain(self.pmf.iter().flatten());
        if all.clone().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return bad("probabilities must be finite and nonnegative".into());
        }
        if (self.gamma_prob.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
            return bad("gamma probabilities must sum to 1".into());
        }
        if let Some(i) = self.pmf.iter().position(|p| (p.iter().sum::<f64>() - 1.0).abs() > MASS_TOL) {
            return bad(format!("pmf {i} must sum to 1"));
        }
        if self.theta_grid.iter().flatten().any(|t| !t.is_finite()) {
            return bad("theta values must be finite".into());
        }
        Ok(())
    }

    pub fn goods(&self) -> usize {
        self.theta_grid.len()
    }

    pub fn types(&self) -> usize {
        self.gamma.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.theta_grid.iter().map(Vec::len).collect()
    }

    pub fn cells(&self) -> usize {
        self.dims().iter().product()
    }

    /// Per-good cell indices of flat cell `c`.
    pub fn unflatten(&self, c: usize) -> Vec<usize> {
        unflatten(&self.dims(), c)
    }

    pub fn theta(&self, c: usize) -> Vec<f64> {
        self.unflatten(c).iter().zip(&self.theta_grid).map(|(&k, g)| g[k]).collect()
    }

    /// `theta` vectors of every cell in flat order.
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        (0..self.cells()).map(|c| self.theta(c)).collect()
    }

    /// Expected value of allocating every good with positive value.
    pub fn full_surplus(&self) -> f64 {
        let thetas = self.thetas();
        let cell_surplus: Vec<f64> = thetas.iter().map(|t| t.iter().map(|v| v.max(0.0)).sum()).collect();
        self.gamma_prob
            .iter()
            .zip(&self.pmf)
            .map(|(pg, f)| pg * f.iter().zip(&cell_surplus).map(|(p, s)| p * s).sum::<f64>())
            .sum()
    }

    /// The one-good instance of good `j`'s marginal pmfs.
    pub fn marginal(&self, j: usize) -> DiscreteInstance {
        let k = self.theta_grid[j].len();
        let pmf = self
            .pmf
            .iter()
            .map(|f| {
                let mut m = vec![0.0; k];
                for (c, p) in f.iter().enumerate() {
                    m[self.unflatten(c)[j]] += p;
                }
                m
            })
            .collect();
        DiscreteInstance {
            gamma: self.gamma.clone(),
            gamma_prob: self.gamma_prob.clone(),
            theta_grid: vec![self.theta_grid[j].clone()],
            pmf,
            lineage: None,
        }
    }

    /// Whether every pmf factors into its marginals to `tol`.
    pub fn is_product(&self, tol: f64) -> bool {
        let margins: Vec<DiscreteInstance> = (0..self.goods()).map(|j| self.marginal(j)).collect();
        self.pmf.iter().enumerate().all(|(i, f)| {
            f.iter().enumerate().all(|(c, p)| {
                let prod: f64 = self.unflatten(c).iter().enumerate().map(|(j, &k)| margins[j].pmf[i][k]).product();
                (p - prod).abs() <= tol
            })
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let inst: Self = serde_json::from_str(text).map_err(|e| OracleError::InvalidInstance(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }
}

pub(crate) fn unflatten(dims: &[usize], mut c: usize) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for (slot, &d) in idx.iter_mut().zip(dims).rev() {
        *slot = c % d;
        c /= d;
    }
    idx
}

pub(crate) fn flatten(dims: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&k, &d)| acc * d + k)
}

fn midpoints(lo: f64, hi: f64, cells: usize) -> (Vec<f64>, Vec<f64>) {
    let edges: Vec<f64> = (0..=cells).map(|k| lo + (hi - lo) * k as f64 / cells as f64).collect();
    let mids = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    (edges, mids)
}

/// Equal-width cells over the prior support and the `theta` box, with
/// midpoint representatives; masses are cdf differences.
pub fn discretize(model: &JointModel, spec: &GridSpec) -> Result<DiscreteInstance, OracleError> {
    if spec.gamma_cells < 2 || spec.theta_cells.len() != model.dim() || spec.theta_cells.iter().any(|&k| k < 2) {
        return Err(OracleError::InvalidInstance(
            "need at least 2 gamma cells and 2 cells per good, one count per good".into(),
        ));
    }
    let (glo, ghi) = model.gamma_range();
    let (gedges, gamma) = midpoints(glo, ghi, spec.gamma_cells);
    let cdf_g: Vec<f64> = gedges.iter().map(|&g| model.prior.cdf(g)).collect();
    let mut gamma_prob: Vec<f64> = cdf_g.windows(2).map(|w| w[1] - w[0]).collect();
    check_masses(&gamma_prob, "gamma")?;
    normalize(&mut gamma_prob);

    let axes: Vec<(Vec<f64>, Vec<f64>)> =
        model.box_bounds().iter().zip(&spec.theta_cells).map(|(&(lo, hi), &k)| midpoints(lo, hi, k)).collect();
    let theta_grid: Vec<Vec<f64>> = axes.iter().map(|a| a.1.clone()).collect();
    let dims = spec.theta_cells.clone();
    let n = dims.len();
    let corner_dims: Vec<usize> = dims.iter().map(|d| d + 1).collect();
    let corners: usize = corner_dims.iter().product();

    let mut pmf = Vec::with_capacity(gamma.len());
    for &g in &gamma {
        let mut cdf = Vec::with_capacity(corners);
        for k in 0..corners {
            let idx = unflatten(&corner_dims, k);
            let point: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a.0[i]).collect();
            cdf.push(model.joint_cdf(g, &point)?);
        }
        let cells: usize = dims.iter().product();
        let mut masses = Vec::with_capacity(cells);
        for c in 0..cells {
            let idx = unflatten(&dims, c);
            let mut mass = 0.0;
            for mask in 0..(1usize << n) {
                let corner: Vec<usize> = (0..n).map(|j| idx[j] + ((mask >> j) & 1)).collect();
                let sign = if (n - mask.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
                mass += sign * cdf[flatten(&corner_dims, &corner)];
            }
            masses.push(mass);
        }
        check_masses(&masses, &format!("theta at gamma {g}"))?;
        normalize(&mut masses);
        pmf.push(masses);
    }
    let inst = DiscreteInstance {
        gamma,
        gamma_prob,
        theta_grid,
        pmf,
        lineage: Some(Lineage { family: None, grid: spec.clone() }),
    };
    inst.validate()?;
    Ok(inst)
}

fn check_masses(masses: &[f64], what: &str) -> Result<(), OracleError> {
    match masses.iter().position(|&m| m < -MASS_TOL || !m.is_finite()) {
        Some(k) => Err(OracleError::DegenerateCell(format!("{what}: cell {k} has mass {}", masses[k]))),
        None => Ok(()),
    }
}

fn normalize(masses: &mut [f64]) {
    for m in masses.iter_mut() {
        *m = m.max(0.0);
    }
    let total: f64 = masses.iter().sum();
    for m in masses.iter_mut() {
        *m /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CopulaSpec, FamilySpec};

    fn spec(g: usize, t: &[usize]) -> GridSpec {
        GridSpec { gamma_cells: g, theta_cells: t.to_vec() }
    }

    #[test]
    fn uniform_prior_two_cells() {
        let m = FamilySpec::GammaIndependent { goods: 2, copula: CopulaSpec::Independence }.build().unwrap();
        let inst = discretize(&m, &spec(2, &[2, 2])).unwrap();
        assert_eq!(inst.gamma, vec![0.25, 0.75]);
        assert_eq!(inst.gamma_prob, vec![0.5, 0.5]);
        for f in &inst.pmf {
            for p in f {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cl_uniform_masses_match_cdf_differences() {
        let m = FamilySpec::ClUniform { goods: 1, copula: CopulaSpec::Independence }.build().unwrap();
        let inst = discretize(&m, &spec(3, &[4])).unwrap();
        // theta | gamma ~ U[gamma, gamma + 1], cells of width 1/2 on [0, 2].
        let cdf = |x: f64, g: f64| (x - g).clamp(0.0, 1.0);
        for (i, &g) in inst.gamma.iter().enumerate() {
            for k in 0..4 {
                let (a, b) = (0.5 * k as f64, 0.5 * (k + 1) as f64);
                assert!((inst.pmf[i][k] - (cdf(b, g) - cdf(a, g))).abs() < 1e-13);
            }
        }
        assert_eq!(inst.theta_grid[0], vec![0.25, 0.75, 1.25, 1.75]);
    }

    #[test]
    fn clayton_cells_sum_to_marginals() {
        let m = FamilySpec::Location { goods: 2, copula: CopulaSpec::Clayton { alpha: 2.0, alpha_slope: 0.0 }, center: 0.25, slope: 0.5, scale: 0.2 }
            .build()
            .unwrap();
        let inst = discretize(&m, &spec(2, &[3, 3])).unwrap();
        let (lo, hi) = m.box_bounds()[0];
        for (i, &g) in inst.gamma.iter().enumerate() {
            let marg = inst.marginal(0).pmf[i].clone();
            for k in 0..3 {
                let a = lo + (hi - lo) * k as f64 / 3.0;
                let b = lo + (hi - lo) * (k + 1) as f64 / 3.0;
                let direct = m.marginals[0].cdf(b, g) - m.marginals[0].cdf(a, g);
                assert!((marg[k] - direct).abs() < 1e-12);
            }
        }
        assert!(!inst.is_product(1e-6));
    }

    #[test]
    fn too_few_cells_rejected() {
        let m = FamilySpec::ClUniform { goods: 1, copula: CopulaSpec::Independence }.build().unwrap();
        assert!(discretize(&m, &spec(1, &[2])).is_err());
        assert!(discretize(&m, &spec(2, &[1])).is_err());
        assert!(discretize(&m, &spec(2, &[2, 2])).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = FamilySpec::ClUniform { goods: 2, copula: CopulaSpec::Independence }.build().unwrap();
        let inst = discretize(&m, &spec(2, &[2, 3])).unwrap();
        assert_eq!(DiscreteInstance::from_json(&inst.to_json()).unwrap(), inst);
        assert!(DiscreteInstance::from_json("{\"gamma\": [0.5]}").is_err());
    }

    #[test]
    fn invalid_pmf_rejected() {
        let r = DiscreteInstance::new(vec![0.0], vec![1.0], vec![vec![1.0, 2.0]], vec![vec![0.7, 0.7]]);
        assert!(matches!(r, Err(OracleError::InvalidInstance(_))));
    }

    #[test]
    fn flatten_inverts_unflatten() {
        let dims = [2, 3, 4];
        for c in 0..24 {
            assert_eq!(flatten(&dims, &unflatten(&dims, c)), c);
        }
        assert_eq!(unflatten(&dims, 5), vec![0, 1, 1]);
    }
}
