use proptest::prelude::*;

use super::*;
use crate::model::{CopulaSpec, FamilySpec, GammaPrior, JointModel, Marginal, QuadOptions};
use crate::numerics::{uniform_draws, RngStream};

fn family(name: &str, goods: usize, copula: CopulaSpec) -> JointModel {
    match name {
        "cl" => FamilySpec::ClUniform { goods, copula },
        "loc" => FamilySpec::Location { goods, copula, center: 0.25, slope: 0.5, scale: 0.2 },
        _ => FamilySpec::GammaIndependent { goods, copula },
    }
    .build()
    .unwrap()
}

fn solved(model: &JointModel, points: usize) -> ThresholdMechanism {
    let mut mech = solve_thresholds(model, &uniform_gamma_grid(model, points)).unwrap();
    upfront_t1(model, &mut mech, &QuadOptions::default()).unwrap();
    mech
}

fn clayton() -> CopulaSpec {
    CopulaSpec::Clayton { alpha: 2.0, alpha_slope: 0.0 }
}

fn gaussian() -> CopulaSpec {
    CopulaSpec::Gaussian { rho: 0.5, rho_slope: 0.0 }
}

/// Optimal one-good revenue at type `gamma` for the CL-uniform family,
/// `int_p^{gamma+1} (theta - (1 - gamma)) dtheta` with `p` the clipped zero.
fn cl_pointwise_revenue(gamma: f64) -> f64 {
    let p = (1.0 - gamma).max(gamma);
    let hi = gamma + 1.0;
    0.5 * (hi * hi - p * p) - (1.0 - gamma) * (hi - p)
}

#[test]
fn cl_uniform_one_good_revenue() {
    let n = 200_000;
    let oracle: f64 = (0..n).map(|k| cl_pointwise_revenue((k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
    assert!((oracle - 7.0 / 12.0).abs() < 1e-9);
    let m = family("cl", 1, CopulaSpec::Independence);
    let r = revenue_direct(&m, &solved(&m, 101), &QuadOptions::default()).unwrap();
    assert!((r - oracle).abs() <= 1e-4, "{r}");
}

#[test]
fn cl_uniform_two_goods_revenue() {
    let m = family("cl", 2, CopulaSpec::Independence);
    let r = revenue_direct(&m, &solved(&m, 101), &QuadOptions::default()).unwrap();
    assert!((r - 7.0 / 6.0).abs() <= 2e-4, "{r}");
}

#[test]
fn revenue_triple_identity() {
    let opts = QuadOptions::default();
    for m in [family("cl", 1, CopulaSpec::Independence), family("cl", 2, CopulaSpec::Independence), family("loc", 2, CopulaSpec::Independence), family("loc", 2, clayton())] {
        let r = revenue_report(&m, &solved(&m, 41), &opts).unwrap();
        assert!(r.functional_rel_residual <= 1e-5, "{r:?}");
        assert!(r.impulse_rel_residual.unwrap() <= 1e-5, "{r:?}");
    }
}

#[test]
fn dependency_irrelevance() {
    let opts = QuadOptions::default();
    let base = family("loc", 2, CopulaSpec::Independence);
    let mech0 = solved(&base, 21);
    let r0 = revenue_report(&base, &mech0, &opts).unwrap();
    for cop in [clayton(), gaussian()] {
        let m = family("loc", 2, cop);
        let mech = solved(&m, 21);
        for (a, b) in mech.strikes.iter().flatten().zip(mech0.strikes.iter().flatten()) {
            assert!((a - b).abs() <= 1e-8);
        }
        let r = revenue_report(&m, &mech, &opts).unwrap();
        for (x, y) in [(r.direct, r0.direct), (r.functional, r0.functional), (r.impulse.unwrap(), r0.impulse.unwrap())] {
            assert!((x - y).abs() <= 2e-4 * y.abs(), "{x} vs {y}");
        }
    }
}

#[test]
fn no_distortion_at_the_top() {
    for m in [family("cl", 2, CopulaSpec::Independence), family("loc", 1, CopulaSpec::Independence)] {
        let mech = solve_thresholds(&m, &uniform_gamma_grid(&m, 11)).unwrap();
        let cutoffs = mech.thresholds(&m);
        let top = cutoffs.last().unwrap();
        for (j, p) in top.iter().enumerate() {
            let lo = m.marginals[j].support(1.0).0;
            assert!((p - lo.max(0.0)).abs() <= 1e-8);
        }
    }
}

#[test]
fn static_model_extracts_everything() {
    let opts = QuadOptions::default();
    let m = family("static", 2, CopulaSpec::Independence);
    let mech = solved(&m, 11);
    for t in &mech.upfront {
        assert!((t - 1.0).abs() < 1e-12);
    }
    for g in [0.0, 0.37, 1.0] {
        assert!(interim_utility(&m, &mech, g, &opts).unwrap().abs() < 1e-12);
    }
    let r = revenue_report(&m, &mech, &opts).unwrap();
    assert!((r.direct - 1.0).abs() < 1e-12 && (r.functional - 1.0).abs() < 1e-12);
}

#[test]
fn lowest_type_fee_is_its_expected_utility() {
    let opts = QuadOptions::default();
    let m = family("cl", 1, CopulaSpec::Independence);
    let mech = solved(&m, 101);
    // p(0) = 1 on support [0, 1]: E[max(0, theta - 1)] = 0.
    assert!(mech.upfront[0].abs() < 1e-14);
    assert!(interim_utility(&m, &mech, 0.0, &opts).unwrap().abs() <= 1e-8);
}

#[test]
fn interim_utility_follows_rent_integral() {
    let opts = QuadOptions::default();
    let m = family("cl", 1, CopulaSpec::Independence);
    let mech = solved(&m, 101);
    let rule = crate::numerics::gauss_rule(8, 0.0, 1.0).unwrap();
    let mut rent = 0.0;
    let mut prev = 0.0;
    for (i, w) in mech.gamma_grid.windows(2).enumerate() {
        assert!(interim_utility(&m, &mech, w[0], &opts).unwrap() >= prev - 1e-12);
        let cell = rule.remap(w[0], w[1]).unwrap();
        rent += cell.integrate(|g| m.rent_density(g, &mech.breaks_at(i), &opts, |t| mech.utility_at(i, t)).unwrap());
        let u = interim_utility(&m, &mech, w[1], &opts).unwrap();
        assert!((u - rent).abs() <= 1e-6, "cell {i}: {u} vs {rent}");
        prev = u;
    }
}

#[test]
fn envelope_on_smooth_family() {
    let opts = QuadOptions::default();
    let m = family("loc", 2, clayton());
    let mech = solved(&m, 11);
    let h = 1e-4;
    for g in [0.13, 0.47, 0.82] {
        let i = mech.menu_index(g);
        let fd = (interim_utility(&m, &mech, g + h, &opts).unwrap() - interim_utility(&m, &mech, g - h, &opts).unwrap()) / (2.0 * h);
        let d = m.rent_density(g, &mech.breaks_at(i), &opts, |t| mech.utility_at(i, t)).unwrap();
        assert!((fd - d).abs() <= 1e-4, "{fd} vs {d}");
    }
}

#[test]
fn ic_audit_of_optimal_mechanism() {
    let opts = QuadOptions::default();
    let m = family("cl", 1, CopulaSpec::Independence);
    let mech = solved(&m, 51);
    let audit = ic_audit(&m, &mech, &mech.gamma_grid, &opts).unwrap();
    let scale = full_surplus(&m, &opts).unwrap();
    assert!(audit.max_gain <= 1e-6 * scale, "{audit:?}");
    assert!(audit.min_ir >= -1e-8);
    assert!(audit.curve.utility[0].abs() <= 1e-8);
    assert!(audit.curve.max_decrease() <= 1e-12);
}

#[test]
fn static_model_audit_is_flat() {
    let opts = QuadOptions::default();
    let m = family("static", 1, CopulaSpec::Independence);
    let mech = solved(&m, 11);
    let audit = ic_audit(&m, &mech, &mech.gamma_grid, &opts).unwrap();
    assert!(audit.max_gain.abs() < 1e-12);
    assert!(audit.curve.utility.iter().all(|u| u.abs() < 1e-12));
}

#[test]
fn perturbed_strike_is_detected() {
    let opts = QuadOptions::default();
    let m = family("cl", 1, CopulaSpec::Independence);
    let mut mech = solved(&m, 51);
    mech.strikes[20][0] -= 0.1;
    let audit = ic_audit(&m, &mech, &mech.gamma_grid, &opts).unwrap();
    assert!(audit.max_gain > 1e-4, "{audit:?}");
    assert_eq!(audit.worst_report, mech.gamma_grid[20]);
}

#[test]
fn cycles_of_threshold_rules() {
    let m = family("cl", 2, CopulaSpec::Independence);
    let mech = solved(&m, 21);
    let draws = uniform_draws(RngStream::new(3, 1), 5000, 2);
    for g in [0.1, 0.5, 0.9] {
        let cycles: Vec<Vec<Vec<f64>>> = draws.chunks(5).map(|c| c.iter().map(|z| z.iter().map(|x| 2.0 * x).collect()).collect()).collect();
        assert!(cyclic_monotonicity_check(&mech, g, &cycles) <= 1e-10);
        let pairs: Vec<Vec<Vec<f64>>> = draws.chunks(2).map(|c| c.to_vec()).collect();
        assert!(cyclic_monotonicity_check(&mech, g, &pairs) <= 1e-12);
    }
}

#[test]
fn non_monotone_allocation_is_flagged() {
    let q = |t: &[f64]| vec![if t[0] < 0.5 { 1.0 } else { 0.0 }];
    let cycle = vec![vec![vec![0.2], vec![0.8]]];
    assert!(max_cycle_sum(q, &cycle) > 0.5);
}

#[test]
fn never_selling_earns_nothing() {
    let opts = QuadOptions::default();
    let m = family("cl", 2, CopulaSpec::Independence);
    let mut mech = solve_thresholds(&m, &uniform_gamma_grid(&m, 11)).unwrap();
    for i in 0..mech.gamma_grid.len() {
        mech.strikes[i] = vec![2.0; 2];
        mech.never_sell[i] = vec![true; 2];
    }
    assert_eq!(revenue_functional(&m, &mech, &opts).unwrap(), 0.0);
}

#[test]
fn impulse_form_requires_invariance() {
    let m = family("loc", 2, CopulaSpec::Gaussian { rho: 0.2, rho_slope: 0.6 });
    let mech = solved(&m, 5);
    let err = revenue_impulse_form(&m, &mech, &QuadOptions::default());
    assert_eq!(err, Err(MechError::Model(crate::model::ModelError::InvarianceRequired)));
    assert!(revenue_report(&m, &mech, &QuadOptions::default()).unwrap().impulse.is_none());
}

#[test]
fn regularity_reports() {
    let grid = |m: &JointModel| uniform_gamma_grid(m, 21);
    for m in [family("cl", 2, CopulaSpec::Independence), family("static", 1, CopulaSpec::Independence), family("loc", 2, CopulaSpec::Independence)] {
        let r = regularity_report(&m, &grid(&m), 50).unwrap();
        assert!(r.passes(), "{r:?}");
    }
    let rising = Marginal::ShiftedUniform { offset: 1.0, slope: -1.0, width: 1.0, box_lo: 0.0, box_hi: 2.0 };
    let m = JointModel::new(GammaPrior::unit_uniform(), vec![rising], crate::model::Copula::Independence { dim: 1 }, true).unwrap();
    let r = regularity_report(&m, &grid(&m), 50).unwrap();
    assert!(!r.passes());
    let v = r.max_cdf_gamma.unwrap();
    assert!(v.amount > 0.5 && v.good == 0);
}

#[test]
fn strikes_are_nonincreasing() {
    for m in [family("cl", 2, CopulaSpec::Independence), family("loc", 1, CopulaSpec::Independence)] {
        let mech = solve_thresholds(&m, &uniform_gamma_grid(&m, 101)).unwrap();
        for w in mech.strikes.windows(2) {
            for j in 0..m.dim() {
                assert!(w[1][j] <= w[0][j] + 1e-12);
            }
        }
    }
}

#[test]
fn interior_thresholds_are_nonincreasing() {
    for m in [family("cl", 1, CopulaSpec::Independence), family("loc", 1, CopulaSpec::Independence)] {
        let mech = solve_thresholds(&m, &uniform_gamma_grid(&m, 101)).unwrap();
        for (w, g) in mech.strikes.windows(2).zip(mech.gamma_grid.windows(2)) {
            let clipped = |p: f64, gamma: f64| p <= m.marginals[0].support(gamma).0;
            if !clipped(w[0][0], g[0]) && !clipped(w[1][0], g[1]) {
                assert!(w[1][0] <= w[0][0] + 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn t2_is_theta_dot_q_minus_u(
        strikes in prop::collection::vec(0.0f64..2.0, 3),
        theta in prop::collection::vec(0.0f64..2.0, 3),
    ) {
        let mech = ThresholdMechanism { gamma_grid: vec![0.0], strikes: vec![strikes], never_sell: vec![vec![false; 3]], upfront: vec![] };
        let q = mech.allocation_at(0, &theta);
        let dot: f64 = q.iter().zip(&theta).map(|(a, b)| a * b).sum();
        prop_assert!((dot - mech.utility_at(0, &theta) - mech.transfer_t2_at(0, &theta)).abs() <= 1e-12);
    }

    #[test]
    fn utility_is_convex_and_lipschitz(
        strikes in prop::collection::vec(0.0f64..2.0, 2),
        a in prop::collection::vec(0.0f64..2.0, 2),
        b in prop::collection::vec(0.0f64..2.0, 2),
        s in 0.0f64..1.0,
    ) {
        let mech = ThresholdMechanism { gamma_grid: vec![0.0], strikes: vec![strikes], never_sell: vec![vec![false; 2]], upfront: vec![] };
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + (1.0 - s) * y).collect();
        let (ua, ub, um) = (mech.utility_at(0, &a), mech.utility_at(0, &b), mech.utility_at(0, &mid));
        prop_assert!(um <= s * ua + (1.0 - s) * ub + 1e-12);
        let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        prop_assert!((ua - ub).abs() <= l1 + 1e-12);
    }

    #[test]
    fn threshold_cycles_are_nonpositive(points in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 2), 2..7), p in prop::collection::vec(0.0f64..2.0, 2)) {
        let mech = ThresholdMechanism { gamma_grid: vec![0.0], strikes: vec![p], never_sell: vec![vec![false; 2]], upfront: vec![] };
        prop_assert!(cyclic_monotonicity_check(&mech, 0.0, &[points]) <= 1e-12);
    }
}
