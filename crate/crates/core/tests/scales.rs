mod common;

use common::{bisect, legendre_ratio_power, scales};
use heatlab::scales::{ScaleFunction, ScaleTriple};
use proptest::prelude::*;

/// Brute-force `sup_s r/s - c0 t / phi(s)` on a dense log grid, independent of
/// the closed form and of the library's own grid search.
fn legendre_scan(f: &ScaleFunction, r: f64, t: f64, c0: f64) -> f64 {
    let (lo, hi) = (-40.0f64, 40.0f64);
    let n = 200_000;
    (0..=n)
        .map(|k| {
            let s = (lo + (hi - lo) * k as f64 / n as f64).exp();
            r / s - c0 * t / f.value(s)
        })
        .fold(0.0, f64::max)
}

fn broken_diffusive() -> ScaleTriple {
    let phi_c = ScaleFunction::from_exponents(&[0.5, 4.0], &[2.0, 3.0, 2.5]).unwrap();
    ScaleTriple::new(phi_c, ScaleFunction::power(1.0, 1.0).unwrap()).unwrap()
}

#[test]
fn m_of_cubic_scale_matches_bisection() {
    let s = scales(3.0, 1.0);
    // bar_phi_c(u) = u^2; solve u^2 = t/r by bisection.
    let inv = bisect(|u| u * u - 1.0 / 2.0, 0.0, 10.0);
    let oracle = 2.0 / inv;
    assert!((s.m(1.0, 2.0) - oracle).abs() < 1e-12 * oracle);
    assert!((oracle - 2.0 * 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn legendre_ratio_is_the_power_constant() {
    for beta in [2.0, 3.0] {
        let s = scales(beta, 1.0);
        let want = legendre_ratio_power(beta);
        for &(t, r) in &[(1e-3, 0.5), (1.0, 1.0), (10.0, 300.0)] {
            let got = s.legendre_sup(r, t, 1.0).unwrap() / s.m(t, r);
            assert!((got - want).abs() < 1e-10, "beta {beta}: {got} vs {want}");
        }
        let (lo, hi) = s.legendre_bracket(1.0);
        assert!(lo <= want + 1e-12 && want <= hi + 1e-12, "[{lo}, {hi}] misses {want}");
    }
    assert!((legendre_ratio_power(2.0) - 0.25).abs() < 1e-15);
}

#[test]
fn legendre_closed_and_grid_agree_with_scan() {
    let s = broken_diffusive();
    for &(r, t) in &[(0.3, 0.01), (2.0, 1.0), (20.0, 3.0), (100.0, 50.0)] {
        let oracle = legendre_scan(s.phi_c(), r, t, 1.0);
        let closed = s.legendre_sup(r, t, 1.0).unwrap();
        let grid = s.legendre_sup_grid(r, t, 1.0).unwrap();
        assert!((closed - oracle).abs() <= 1e-6 * oracle.max(1e-12), "closed {closed} vs {oracle}");
        assert!((grid - oracle).abs() <= 0.05 * oracle, "grid {grid} vs {oracle}");
    }
}

#[test]
fn bracket_holds_for_broken_scale() {
    let s = broken_diffusive();
    let (lo, hi) = s.legendre_bracket(1.0);
    for i in 0..30 {
        for j in 0..30 {
            let t = 10f64.powf(-3.0 + 6.0 * i as f64 / 29.0);
            let r = 10f64.powf(-3.0 + 6.0 * j as f64 / 29.0);
            let q = s.legendre_sup(r, t, 1.0).unwrap() / s.m(t, r);
            assert!(q >= lo * (1.0 - 1e-9) && q <= hi * (1.0 + 1e-9), "{q} outside [{lo}, {hi}]");
        }
    }
}

#[test]
fn crossover_root_solves_the_balance() {
    let s = scales(2.0, 1.0);
    for t in [1e-2, 1e-4] {
        let rep = s.crossover_radius(t, 1.0, 1.0).unwrap();
        // m(t,r) = r^2/t for phi_c = r^2; phi_j^{-1}(t) = t.
        let h = |r: f64| r * r / t - (r / t).ln();
        assert!(h(rep.radius).abs() < 1e-8 * (rep.radius * rep.radius / t), "residual at t={t}");
        assert!(rep.c3.is_finite() && rep.c4.is_finite() && rep.c3 > 0.0);
    }
    assert!(s.crossover_radius(1.0, 1.0, 1.0).is_err());
}

#[test]
fn power_bounds_of_single_power_are_exact() {
    let pb = ScaleFunction::power(1.0, 2.5).unwrap().power_bounds();
    assert_eq!((pb.beta1, pb.beta2), (2.5, 2.5));
    assert!((pb.c1 - 1.0).abs() < 1e-12 && (pb.c2 - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn power_bounds_hold(b in 0.05f64..20.0, e0 in 1.1f64..4.0, e1 in 1.1f64..4.0, r in 1e-3f64..1e3, k in 1.0f64..1e4) {
        let f = ScaleFunction::from_exponents(&[b], &[e0, e1]).unwrap();
        let pb = f.power_bounds();
        let big = r * k;
        let q = f.value(big) / f.value(r);
        prop_assert!(q >= pb.c1 * k.powf(pb.beta1) * (1.0 - 1e-9));
        prop_assert!(q <= pb.c2 * k.powf(pb.beta2) * (1.0 + 1e-9));
    }

    #[test]
    fn m_inverts_bar_phi(b in 0.05f64..20.0, e0 in 1.2f64..4.0, e1 in 1.2f64..4.0, t in 1e-4f64..1e4, r in 1e-3f64..1e3) {
        let phi_c = ScaleFunction::from_exponents(&[b], &[e0, e1]).unwrap();
        let s = ScaleTriple::new(phi_c.clone(), ScaleFunction::power(1.0, 1.0).unwrap());
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        let m = s.m(t, r);
        // bar_phi_c(r/m) = t/r
        let lhs = phi_c.value(r / m) / (r / m);
        prop_assert!((lhs - t / r).abs() <= 1e-9 * (t / r));
    }

    #[test]
    fn inverse_round_trips(b in 0.05f64..20.0, e0 in 0.5f64..4.0, e1 in 0.5f64..4.0, r in 1e-4f64..1e4) {
        let f = ScaleFunction::from_exponents(&[b], &[e0, e1]).unwrap();
        let back = f.inverse(f.value(r));
        prop_assert!((back - r).abs() <= 1e-9 * r);
    }
}
