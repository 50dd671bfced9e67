mod common;

use common::{diffusion, mean_exit_z1, path_lambda1, scales, stable_model};
use heatlab::functionals::{self, BallFamily};
use proptest::prelude::*;

const SIDE: usize = 128;

#[test]
fn mean_exit_matches_tridiagonal_solve() {
    let f = diffusion(SIDE);
    let s = f.space();
    let c = s.center();
    for r in [2usize, 5, 16, 32] {
        let ball = s.ball(c, r as f64);
        let e = f.mean_exit(&ball).unwrap();
        let k = ball.iter().position(|&y| y == c).unwrap();
        let oracle = mean_exit_z1(r);
        assert!((e[k] - oracle).abs() < 1e-9 * oracle, "r={r}: {} vs {oracle}", e[k]);
    }
}

#[test]
fn exit_constant_for_diffusion_is_two() {
    let f = diffusion(SIDE);
    let fam = BallFamily { centers: vec![f.space().center()], radii: vec![32.0] };
    let (e, p) = functionals::check_exit(&f, &scales(2.0, 2.0), &fam).unwrap();
    // phi(32) / E tau = 1024 / 512
    let oracle = 32.0 * 32.0 / mean_exit_z1(32);
    assert!((e.report.get("c1").unwrap() - oracle).abs() < 1e-9);
    assert!(p.report.verdict.passes());
}

#[test]
fn lambda1_matches_sturm_bisection() {
    let f = diffusion(SIDE);
    let s = f.space();
    for r in [3.0, 8.0, 20.0] {
        let ball = s.ball(s.center(), r);
        let got = functionals::lambda1(&f, &ball).unwrap();
        let oracle = path_lambda1(ball.len());
        assert!((got - oracle).abs() < 1e-10, "r={r}: {got} vs {oracle}");
    }
}

#[test]
fn spectral_exit_duality() {
    let f = stable_model(64, 1.0);
    let s = f.space();
    for r in [4.0, 8.0, 16.0] {
        let (l1, emax) = functionals::lambda1_and_max_exit(&f, &s.ball(s.center(), r)).unwrap();
        assert!(l1 * emax >= 1.0 - 1e-9, "r={r}: {}", l1 * emax);
    }
}

#[test]
fn poincare_ratio_is_inverse_neumann_gap() {
    let f = diffusion(SIDE);
    let s = f.space();
    for r in [4.0, 8.0, 16.0, 32.0] {
        let m = s.ball(s.center(), r).len() as f64;
        // Neumann path on m nodes: second eigenvalue 2 - 2cos(pi/m).
        let oracle = 1.0 / (2.0 - 2.0 * (std::f64::consts::PI / m).cos());
        let got = functionals::poincare_ratio(&f, s.center(), r, 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-8 * oracle, "r={r}: {got} vs {oracle}");
    }
}

#[test]
fn poincare_constant_is_scale_stable() {
    let f = diffusion(SIDE);
    let sc = scales(2.0, 2.0);
    let c: Vec<f64> = [8.0, 16.0, 32.0]
        .iter()
        .map(|&r| functionals::poincare(&f, &sc, f.space().center(), r, 1.0).unwrap())
        .collect();
    let (lo, hi) = (c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(0.0, f64::max));
    assert!(hi / lo < 1.3, "{c:?}");
}

#[test]
fn capacity_of_interval_is_series_resistance() {
    let f = diffusion(SIDE);
    let s = f.space();
    let c = s.center();
    for (big, r) in [(4.0, 2.0), (8.0, 4.0), (16.0, 8.0)] {
        let (cap, phi) = functionals::capacity(&f, &s.ball(c, big), &s.ball(c, big + r)).unwrap();
        // Two resistors of r+1 unit edges each, from the last inner node to the first outer one.
        let oracle = 2.0 / (r + 1.0);
        assert!((cap - oracle).abs() < 1e-10, "R={big}: {cap} vs {oracle}");
        assert!(phi.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }
}

#[test]
fn gcap_constant_is_scale_stable() {
    let f = diffusion(SIDE);
    let sc = scales(2.0, 2.0);
    let s = f.space();
    let ones = nalgebra::DVector::from_element(s.len(), 1.0);
    let vals: Vec<f64> = [4.0, 8.0, 16.0]
        .iter()
        .map(|&big| {
            let r = big / 2.0;
            let (v, _) = functionals::generalized_capacity(&f, &ones, s.center(), big, r, 1.0).unwrap();
            v * sc.phi().value(r) / s.volume(s.center(), big + r)
        })
        .collect();
    let (lo, hi) = (vals.iter().cloned().fold(f64::INFINITY, f64::min), vals.iter().cloned().fold(0.0, f64::max));
    assert!(lo > 0.0 && hi / lo < 4.0, "{vals:?}");
}

#[test]
fn jump_tail_and_ujs_obey_integral_bounds() {
    let alpha = 1.0;
    let f = stable_model(SIDE, alpha);
    let fam = BallFamily::default_for(f.space(), 3);
    let (tail, ujs) = functionals::tail_and_ujs(&f, &scales(2.0, alpha), &fam).unwrap();
    // Σ_{|k|>=r} |k|^{-1-α} <= 2 (r^{-1-α} + r^{-α}/α); times r^α.
    let rmin = fam.radii[0];
    let bound = 2.0 * (1.0 / rmin + 1.0 / alpha);
    assert!(tail.report.get("c1").unwrap() <= bound, "tail {:?}", tail.report.get("c1"));
    // |z-y| <= d + r <= 3d/2 when d >= 2r.
    assert!(ujs.report.get("c").unwrap() <= 1.5f64.powf(1.0 + alpha) + 1e-12);
}

#[test]
fn pure_diffusion_has_no_jump_tail() {
    let f = diffusion(64);
    let fam = BallFamily::default_for(f.space(), 2);
    let (tail, _) = functionals::tail_and_ujs(&f, &scales(2.0, 1.0), &fam).unwrap();
    assert_eq!(tail.report.get("c1").unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn capacity_is_monotone(big in 2usize..8, r1 in 1usize..5, r2 in 1usize..5, shift in 0usize..4) {
        let f = stable_model(40, 1.0);
        let s = f.space();
        let c = s.center() + shift;
        let inner = |r: usize| s.ball(c, r as f64);
        let (a_small, a_big) = (inner(big - 1), inner(big));
        let b = inner(big + r1);
        let b_wide = inner(big + r1 + r2);
        let cap = |a: &[usize], b: &[usize]| functionals::capacity(&f, a, b).unwrap().0;
        let base = cap(&a_big, &b);
        prop_assert!(cap(&a_small, &b) <= base * (1.0 + 1e-9));
        prop_assert!(cap(&a_big, &b_wide) <= base * (1.0 + 1e-9));
    }
}
