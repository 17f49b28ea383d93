//! Independent reference solvers for the integration tests: a dense
//! two-phase tableau simplex and an exhaustive search over deterministic
//! allocations.

#![allow(dead_code)]

use screenforge::model::{CopulaSpec, FamilySpec};
use screenforge::oracle::{discretize, DiscreteInstance, GridSpec};

#[derive(Clone, Copy, PartialEq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// `max c.x` subject to dense rows and finite bounds `lo <= x <= hi`.
pub struct DenseLp {
    pub c: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Cmp, f64)>,
}

const EPS: f64 = 1e-11;

impl DenseLp {
    pub fn new() -> Self {
        DenseLp { c: vec![], lo: vec![], hi: vec![], rows: vec![] }
    }

    pub fn var(&mut self, c: f64, lo: f64, hi: f64) -> usize {
        self.c.push(c);
        self.lo.push(lo);
        self.hi.push(hi);
        self.c.len() - 1
    }

    pub fn row(&mut self, terms: &[(usize, f64)], cmp: Cmp, rhs: f64) {
        let mut a = vec![0.0; self.c.len()];
        for &(v, w) in terms {
            a[v] += w;
        }
        self.rows.push((a, cmp, rhs));
    }

    /// Optimal value, or `None` when infeasible.
    pub fn solve(&self) -> Option<f64> {
        let n = self.c.len();
        let mut rows: Vec<(Vec<f64>, Cmp, f64)> = Vec::new();
        for (a, cmp, b) in &self.rows {
            let mut a = a.clone();
            a.resize(n, 0.0);
            let shift: f64 = a.iter().zip(&self.lo).map(|(x, l)| x * l).sum();
            rows.push((a, *cmp, b - shift));
        }
        for j in 0..n {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, Cmp::Le, self.hi[j] - self.lo[j]));
        }
        for r in rows.iter_mut() {
            if r.2 < 0.0 {
                r.0.iter_mut().for_each(|x| *x = -*x);
                r.2 = -r.2;
                r.1 = match r.1 {
                    Cmp::Le => Cmp::Ge,
                    Cmp::Ge => Cmp::Le,
                    Cmp::Eq => Cmp::Eq,
                };
            }
        }
        let m = rows.len();
        let slacks = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let arts = rows.iter().filter(|r| r.1 != Cmp::Le).count();
        let cols = n + slacks + arts;
        let mut t = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let (mut s, mut a) = (n, n + slacks);
        for (i, (coef, cmp, b)) in rows.iter().enumerate() {
            t[i][..n].copy_from_slice(coef);
            t[i][cols] = *b;
            match cmp {
                Cmp::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Cmp::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Cmp::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }
        let mut phase1 = vec![0.0; cols];
        phase1[n + slacks..].fill(-1.0);
        simplex(&mut t, &mut basis, &phase1, cols)?;
        let infeasibility: f64 = basis.iter().enumerate().filter(|(_, &b)| b >= n + slacks).map(|(i, _)| t[i][cols]).sum();
        if infeasibility > 1e-9 {
            return None;
        }
        for i in 0..m {
            if basis[i] >= n + slacks {
                if let Some(j) = (0..n + slacks).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                }
            }
        }
        let mut phase2 = vec![0.0; cols];
        phase2[..n].copy_from_slice(&self.c);
        simplex(&mut t, &mut basis, &phase2, n + slacks)?;
        let mut x = vec![0.0; cols];
        for (i, &b) in basis.iter().enumerate() {
            x[b] = t[i][cols];
        }
        Some((0..n).map(|j| self.c[j] * (x[j] + self.lo[j])).sum())
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    t[r].iter_mut().for_each(|x| *x /= p);
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r && row[c] != 0.0 {
            let f = row[c];
            row.iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
        }
    }
    basis[r] = c;
}

/// Bland's rule over the first `enter_limit` columns. `None` if unbounded.
fn simplex(t: &mut [Vec<f64>], basis: &mut [usize], obj: &[f64], enter_limit: usize) -> Option<()> {
    let rhs = t[0].len() - 1;
    loop {
        let entering = (0..enter_limit).find(|&j| {
            !basis.contains(&j) && obj[j] - basis.iter().enumerate().map(|(i, &b)| obj[b] * t[i][j]).sum::<f64>() > EPS
        });
        let Some(j) = entering else { return Some(()) };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][j] > EPS {
                let ratio = t[i][rhs] / t[i][j];
                match best {
                    Some((k, r)) if ratio > r + 1e-13 || (ratio > r - 1e-13 && basis[i] > basis[k]) => {}
                    _ => best = Some((i, ratio)),
                }
            }
        }
        let (r, _) = best?;
        pivot(t, basis, r, j);
    }
}

/// Whether some transfers make the deterministic allocation `q` truthful.
fn implementable(thetas: &[Vec<f64>], q: &[Vec<f64>]) -> bool {
    let k = q.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // t2(c) - t2(r) <= theta_c . (q(c) - q(r)): shortest paths, no negative cycle.
    let mut d = vec![vec![f64::INFINITY; k]; k];
    for c in 0..k {
        d[c][c] = 0.0;
        for r in 0..k {
            if r != c {
                d[r][c] = dot(&thetas[c], &q[c]) - dot(&thetas[c], &q[r]);
            }
        }
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                if d[i][m] + d[m][j] < d[i][j] {
                    d[i][j] = d[i][m] + d[m][j];
                }
            }
        }
    }
    (0..k).all(|i| d[i][i] >= -1e-12)
}

fn transfer_lp(inst: &DiscreteInstance, thetas: &[Vec<f64>], q: &[&Vec<Vec<f64>>]) -> Option<f64> {
    let m = inst.gamma.len();
    let k = thetas.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let cap = 10.0 * inst.full_surplus().max(1.0);
    let vmax: f64 = thetas.iter().map(|t| t.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut lp = DenseLp::new();
    let t1: Vec<usize> = (0..m).map(|i| lp.var(inst.gamma_prob[i], -cap, cap)).collect();
    let t2: Vec<Vec<usize>> =
        (0..m).map(|i| (0..k).map(|c| lp.var(inst.gamma_prob[i] * inst.pmf[i][c], -cap, cap)).collect()).collect();
    // Interim utility terms of type i, as (var, coef) plus constant.
    let interim = |i: usize| -> (Vec<(usize, f64)>, f64) {
        let f = &inst.pmf[i];
        let mut terms: Vec<(usize, f64)> = (0..k).map(|c| (t2[i][c], -f[c])).collect();
        terms.push((t1[i], -1.0));
        (terms, (0..k).map(|c| f[c] * dot(&thetas[c], &q[i][c])).sum())
    };
    for i in 0..m {
        let (terms, constant) = interim(i);
        lp.row(&terms, Cmp::Ge, -constant);
        for c in 0..k {
            for r in 0..k {
                if r != c {
                    // theta_c q(c) - t2(c) >= theta_c q(r) - t2(r)
                    lp.row(&[(t2[i][c], -1.0), (t2[i][r], 1.0)], Cmp::Ge, dot(&thetas[c], &q[i][r]) - dot(&thetas[c], &q[i][c]));
                }
            }
        }
    }
    for i in 0..m {
        for kk in (0..m).filter(|&kk| kk != i) {
            let y: Vec<usize> = (0..k).map(|_| lp.var(0.0, -cap - vmax, cap + vmax)).collect();
            for c in 0..k {
                for r in 0..k {
                    // y_c >= theta_c q_k(r) - t2_k(r)
                    lp.row(&[(y[c], 1.0), (t2[kk][r], 1.0)], Cmp::Ge, dot(&thetas[c], &q[kk][r]));
                }
            }
            // sum f_i y - t1_k <= U_i
            let (terms, constant) = interim(i);
            let mut row: Vec<(usize, f64)> = (0..k).map(|c| (y[c], inst.pmf[i][c])).collect();
            row.push((t1[kk], -1.0));
            row.extend(terms.iter().map(|&(v, w)| (v, -w)));
            lp.row(&row, Cmp::Le, constant);
        }
    }
    lp.solve()
}

/// Best simultaneous revenue over deterministic allocations: every
/// implementable 0/1 allocation table per type, with optimal transfers
/// under all joint misreports.
pub fn brute_force_simultaneous(inst: &DiscreteInstance) -> f64 {
    let thetas = inst.thetas();
    let (k, n) = (thetas.len(), inst.goods());
    let per_cell = 1usize << n;
    let tables: Vec<Vec<Vec<f64>>> = (0..per_cell.pow(k as u32))
        .map(|code| {
            (0..k).map(|c| (0..n).map(|j| (((code / per_cell.pow(c as u32)) >> j) & 1) as f64).collect()).collect()
        })
        .filter(|q: &Vec<Vec<f64>>| implementable(&thetas, q))
        .collect();
    let m = inst.gamma.len();
    let mut best = f64::NEG_INFINITY;
    let mut choice = vec![0usize; m];
    loop {
        let q: Vec<&Vec<Vec<f64>>> = choice.iter().map(|&c| &tables[c]).collect();
        if let Some(v) = transfer_lp(inst, &thetas, &q) {
            best = best.max(v);
        }
        let mut d = 0;
        while d < m {
            choice[d] += 1;
            if choice[d] < tables.len() {
                break;
            }
            choice[d] = 0;
            d += 1;
        }
        if d == m {
            return best;
        }
    }
}

pub fn toy(pmf_l: [f64; 2], pmf_h: [f64; 2]) -> DiscreteInstance {
    DiscreteInstance::new(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![1.0, 2.0]], vec![pmf_l.to_vec(), pmf_h.to_vec()]).unwrap()
}

pub fn grid(gamma_cells: usize, theta_cells: &[usize]) -> GridSpec {
    GridSpec { gamma_cells, theta_cells: theta_cells.to_vec() }
}

pub fn family(name: &str, goods: usize, copula: CopulaSpec) -> FamilySpec {
    match name {
        "cl-uniform" => FamilySpec::ClUniform { goods, copula },
        "location" => FamilySpec::Location { goods, copula, center: 0.25, slope: 0.5, scale: 0.2 },
        "gamma-independent" => FamilySpec::GammaIndependent { goods, copula },
        _ => unreachable!(),
    }
}

pub fn clayton(alpha: f64) -> CopulaSpec {
    CopulaSpec::Clayton { alpha, alpha_slope: 0.0 }
}

pub fn gaussian(rho: f64, rho_slope: f64) -> CopulaSpec {
    CopulaSpec::Gaussian { rho, rho_slope }
}

/// Instances with at most two types and four cells: hand-made ones and
/// discretized built-in families.
pub fn small_instances() -> Vec<(String, DiscreteInstance)> {
    let mut out = vec![
        ("toy (3/4,1/4)/(1/4,3/4)".to_string(), toy([0.75, 0.25], [0.25, 0.75])),
        ("toy identical".to_string(), toy([0.4, 0.6], [0.4, 0.6])),
        (
            "single type 4 cells".to_string(),
            DiscreteInstance::new(vec![0.5], vec![1.0], vec![vec![0.5, 1.0, 1.5, 2.0]], vec![vec![0.1, 0.2, 0.3, 0.4]]).unwrap(),
        ),
    ];
    let specs: Vec<(FamilySpec, GridSpec)> = vec![
        (family("cl-uniform", 1, CopulaSpec::Independence), grid(2, &[2])),
        (family("cl-uniform", 1, CopulaSpec::Independence), grid(2, &[3])),
        (family("cl-uniform", 1, CopulaSpec::Independence), grid(2, &[4])),
        (family("location", 1, CopulaSpec::Independence), grid(2, &[4])),
        (family("cl-uniform", 2, CopulaSpec::Independence), grid(2, &[2, 2])),
        (family("location", 2, CopulaSpec::Independence), grid(2, &[2, 2])),
        (family("location", 2, clayton(2.0)), grid(2, &[2, 2])),
        (family("location", 2, gaussian(0.2, 0.6)), grid(2, &[2, 2])),
        (family("gamma-independent", 2, CopulaSpec::Independence), grid(2, &[2, 2])),
    ];
    for (f, g) in specs {
        let inst = discretize(&f.build().unwrap(), &g).unwrap();
        out.push((format!("{} {:?}x{:?}", f.label(), g.gamma_cells, g.theta_cells), inst));
    }
    out
}

/// Each good's marginal cdf is weakly decreasing across types, listed in
/// increasing `gamma`.
pub fn types_ordered(inst: &DiscreteInstance) -> bool {
    (0..inst.goods()).all(|j| {
        let m = inst.marginal(j);
        let cdfs: Vec<Vec<f64>> = m
            .pmf
            .iter()
            .map(|f| f.iter().scan(0.0, |s, p| {
                *s += p;
                Some(*s)
            }).collect())
            .collect();
        cdfs.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(lo, hi)| *hi <= lo + 1e-12))
    })
}

/// Two-type instances with random cell masses, either one good on four
/// cells or two goods on a 2x2 grid. `ordered` keeps only draws passing
/// [`types_ordered`] and otherwise keeps only draws failing it.
pub fn random_instances(seed: u64, count: usize, ordered: bool) -> Vec<DiscreteInstance> {
    use screenforge::numerics::{uniform_draws, RngStream};
    let mut out = Vec::new();
    let mut stream = RngStream::new(seed, 0);
    while out.len() < count {
        let d = &uniform_draws(stream, 1, 9)[0];
        stream = stream.advanced(9);
        let two = out.len() % 2 == 1;
        let grid = if two { vec![vec![1.0, 2.0], vec![0.5, 1.5]] } else { vec![vec![0.5, 1.0, 1.7, 2.0]] };
        let pmf: Vec<Vec<f64>> = d[1..]
            .chunks(4)
            .map(|w| {
                let total: f64 = w.iter().map(|x| x + 0.05).sum();
                w.iter().map(|x| (x + 0.05) / total).collect()
            })
            .collect();
        let p = 0.2 + 0.6 * d[0];
        let inst = DiscreteInstance::new(vec![0.0, 1.0], vec![p, 1.0 - p], grid, pmf).unwrap();
        if types_ordered(&inst) == ordered {
            out.push(inst);
        }
    }
    out
}
