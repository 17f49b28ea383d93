use super::NumericsError;

/// Default Gauss-Legendre order per axis for continuum integrals.
pub const DEFAULT_ORDER: usize = 32;

/// Gauss-Legendre nodes and weights mapped onto `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Maps the rule onto a new interval without recomputing the nodes.
    pub fn remap(&self, lo: f64, hi: f64) -> Result<QuadratureRule, NumericsError> {
        check_interval(lo, hi)?;
        let scale = (hi - lo) / (self.hi - self.lo);
        let nodes = self.nodes.iter().map(|x| lo + (x - self.lo) * scale).collect();
        let weights = self.weights.iter().map(|w| w * scale).collect();
        Ok(QuadratureRule { lo, hi, nodes, weights })
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<(), NumericsError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(NumericsError::InvalidInterval { lo, hi });
    }
    Ok(())
}

/// Legendre nodes on [-1, 1] by Newton iteration from the Chebyshev-like guess.
fn legendre_reference(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule with `order` nodes on `[lo, hi]`; exact for
/// polynomials of degree `2 * order - 1`.
pub fn gauss_rule(order: usize, lo: f64, hi: f64) -> Result<QuadratureRule, NumericsError> {
    if order == 0 {
        return Err(NumericsError::InvalidOrder);
    }
    check_interval(lo, hi)?;
    let (nodes, weights) = legendre_reference(order);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Ok(QuadratureRule {
        lo,
        hi,
        nodes: nodes.iter().map(|x| mid + half * x).collect(),
        weights: weights.iter().map(|w| w * half).collect(),
    })
}

/// Composite Gauss rule along one axis: the interval is cut at the interior
/// breakpoints and each panel gets its own `order`-point rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisRule {
    pub fn composite(
        reference: &QuadratureRule,
        lo: f64,
        hi: f64,
        breaks: &[f64],
    ) -> Result<AxisRule, NumericsError> {
        check_interval(lo, hi)?;
        let mut cuts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| b.is_finite() && *b > lo && *b < hi)
            .collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(lo);
        let tiny = 1e-14 * (hi - lo).max(1.0);
        for c in cuts {
            if c - edges[edges.len() - 1] > tiny && hi - c > tiny {
                edges.push(c);
            }
        }
        edges.push(hi);
        let mut nodes = Vec::with_capacity((edges.len() - 1) * reference.nodes.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in edges.windows(2) {
            let panel = reference.remap(pair[0], pair[1])?;
            nodes.extend(panel.nodes);
            weights.extend(panel.weights);
        }
        Ok(AxisRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Breakpoints clustering geometrically toward both ends of `[lo, hi]`.
///
/// Used to resolve integrable endpoint singularities of copula densities.
pub fn geometric_breaks(lo: f64, hi: f64, ratio: f64, smallest: f64) -> Vec<f64> {
    let len = hi - lo;
    let mut out = Vec::new();
    let mut frac = 0.5 * ratio;
    while frac >= smallest {
        out.push(lo + frac * len);
        out.push(hi - frac * len);
        frac *= ratio;
    }
    out
}

/// Visits every tensor-product node, calling `visit(point, weight)`.
pub(crate) fn for_each_node<F: FnMut(&[f64], f64)>(axes: &[AxisRule], mut visit: F) {
    let dim = axes.len();
    if dim == 0 || axes.iter().any(|a| a.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; dim];
    let mut point: Vec<f64> = axes.iter().map(|a| a.nodes[0]).collect();
    loop {
        let w: f64 = idx.iter().zip(axes).map(|(&i, a)| a.weights[i]).product();
        visit(&point, w);
        let mut d = dim;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                point[d] = axes[d].nodes[idx[d]];
                break;
            }
            idx[d] = 0;
            point[d] = axes[d].nodes[0];
        }
    }
}

/// Tensor-product Gauss-Legendre integral of `f` over a box.
pub fn tensor_integrate<F: Fn(&[f64]) -> f64>(
    f: F,
    bounds: &[(f64, f64)],
    orders: &[usize],
) -> Result<f64, NumericsError> {
    let empty: Vec<Vec<f64>> = vec![Vec::new(); bounds.len()];
    tensor_integrate_split(f, bounds, orders, &empty)
}

/// As [`tensor_integrate`], with per-axis breakpoints at which panels are
/// split (kinks and jumps of the integrand).
pub fn tensor_integrate_split<F: Fn(&[f64]) -> f64>(
    f: F,
    bounds: &[(f64, f64)],
    orders: &[usize],
    breaks: &[Vec<f64>],
) -> Result<f64, NumericsError> {
    assert_eq!(bounds.len(), orders.len(), "one order per axis");
    assert_eq!(bounds.len(), breaks.len(), "one breakpoint list per axis");
    let mut axes = Vec::with_capacity(bounds.len());
    for ((&(lo, hi), &order), br) in bounds.iter().zip(orders).zip(breaks) {
        let reference = gauss_rule(order, -1.0, 1.0)?;
        axes.push(AxisRule::composite(&reference, lo, hi, br)?);
    }
    let mut total = 0.0;
    let mut failure: Option<Vec<f64>> = None;
    for_each_node(&axes, |x, w| {
        if failure.is_some() {
            return;
        }
        let v = f(x);
        if !v.is_finite() {
            failure = Some(x.to_vec());
        } else {
            total += w * v;
        }
    });
    match failure {
        Some(point) => Err(NumericsError::EvaluationFailure { point }),
        None => Ok(total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_rule() {
        let r = gauss_rule(1, 0.0, 1.0).unwrap();
        assert_eq!(r.nodes, vec![0.5]);
        assert_eq!(r.weights, vec![1.0]);
    }

    #[test]
    fn two_point_rule_integrates_square() {
        let r = gauss_rule(2, 0.0, 1.0).unwrap();
        assert!((r.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn exp_against_series() {
        // e - 1 = sum_{k>=1} 1/k!
        let mut series = 0.0;
        let mut term = 1.0;
        for k in 1..30 {
            term /= k as f64;
            series += term;
        }
        let r = gauss_rule(16, 0.0, 1.0).unwrap();
        assert!((r.integrate(f64::exp) - series).abs() < 1e-12);
    }

    #[test]
    fn exactness_up_to_guaranteed_degree() {
        for order in 1..=40 {
            let r = gauss_rule(order, -0.5, 2.0).unwrap();
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 2.5).abs() < 1e-12, "order {order}");
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(r.nodes.iter().all(|&x| x > -0.5 && x < 2.0));
            let deg = 2 * order - 1;
            for d in [deg, deg / 2] {
                let exact = (2.0f64.powi(d as i32 + 1) - (-0.5f64).powi(d as i32 + 1)) / (d as f64 + 1.0);
                let got = r.integrate(|x| x.powi(d as i32));
                assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "order {order} degree {d}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(gauss_rule(0, 0.0, 1.0), Err(NumericsError::InvalidOrder));
        assert!(matches!(gauss_rule(3, 1.0, 1.0), Err(NumericsError::InvalidInterval { .. })));
        assert!(matches!(gauss_rule(3, 2.0, 1.0), Err(NumericsError::InvalidInterval { .. })));
    }

    #[test]
    fn tensor_examples() {
        let one = tensor_integrate(|_| 1.0, &[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
        let xy = tensor_integrate(|x| x[0] * x[1], &[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        assert!((xy - 0.25).abs() < 1e-12);
        // density of independent uniforms on [0,2]x[1,3]
        let dens = tensor_integrate(|_| 0.25, &[(0.0, 2.0), (1.0, 3.0)], &[8, 8]).unwrap();
        assert!((dens - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tensor_reports_non_finite_point() {
        let err = tensor_integrate(|x| if x[0] > 0.9 { f64::NAN } else { 1.0 }, &[(0.0, 1.0)], &[8]).unwrap_err();
        match err {
            NumericsError::EvaluationFailure { point } => assert!(point[0] > 0.9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_handles_kink_exactly() {
        let v = tensor_integrate_split(|x| (x[0] - 0.3).max(0.0), &[(0.0, 1.0)], &[2], &[vec![0.3]]).unwrap();
        assert!((v - 0.5 * 0.7 * 0.7).abs() < 1e-15);
    }
}
