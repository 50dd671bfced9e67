mod common;

use common::{bisect, run_bundled, scales, segment, spread, stable_model};
use heatlab::config::CheckParams;
use heatlab::envelopes::{self, EnvelopeOptions, HkMode, Region};
use heatlab::report::Verdict;
use proptest::prelude::*;

fn hk_constants(name: &str, side: usize, params: CheckParams) -> (f64, f64) {
    let r = run_bundled(name, Some(side), "hk", params);
    assert_eq!(r.verdict, Verdict::Certified, "{name} n={side}: {:?}", r.notes);
    (r.get("c1").unwrap(), r.get("c3").unwrap())
}

#[test]
fn legendre_envelope_exponent_for_square_scale() {
    // sup_s 2/s - 1/s^2 = 1 at s = 1.
    let s = segment(16, 1.0);
    let sc = scales(2.0, 1.0);
    let x = s.center();
    let v = envelopes::pc_sup(&sc, &s, 1.0, x, x + 2, 1.0);
    assert!((v - (-1.0f64).exp() / s.volume(x, 1.0)).abs() < 1e-14);
    assert_eq!(envelopes::pc_explicit(&sc, &s, 1.0, x, x, 1.0), 1.0 / s.volume(x, 1.0));
}

#[test]
fn diffusion_sandwich_is_size_stable() {
    let p = || CheckParams { max_speed: Some(6.0), ..Default::default() };
    let (a1, a3) = hk_constants("z1_diffusion", 128, p());
    let (b1, b3) = hk_constants("z1_diffusion", 256, p());
    assert!(spread(&[a1, b1]) < 0.3 && spread(&[a3, b3]) < 0.3, "c1 {a1} {b1}, c3 {a3} {b3}");
}

#[test]
fn jump_model_sandwich_is_tight_and_size_stable() {
    let (a1, a3) = hk_constants("z1_alpha1", 128, CheckParams::default());
    let (b1, b3) = hk_constants("z1_alpha1", 256, CheckParams::default());
    assert!(b3 / b1 <= 200.0, "ratio {}", b3 / b1);
    assert!(spread(&[a1, b1]) < 0.3 && spread(&[a3, b3]) < 0.3, "c1 {a1} {b1}, c3 {a3} {b3}");
}

#[test]
fn fitted_sandwich_holds_on_every_triple() {
    let f = stable_model(128, 1.0);
    let s = f.space();
    let sc = scales(2.0, 1.0);
    let times = envelopes::log_grid(0.1, 16.0, 8);
    let k = f.heat_kernel(&times, None).unwrap();
    let opts = EnvelopeOptions::default();
    let (p, res) = envelopes::fit_hk(&k, &sc, s, HkMode::Hk, &opts).unwrap();
    assert!(p.triples > 0 && res.table.len() == p.triples);
    for row in &res.table.rows {
        let ti = k.times.iter().position(|&t| t == row[0]).unwrap();
        let (x, y) = (row[1] as usize, row[2] as usize);
        let pk = k.p(ti, x, y);
        let up = envelopes::hk_envelope(&sc, s, row[0], x, y, p.c4);
        let lo = envelopes::hk_envelope(&sc, s, row[0], x, y, p.c2);
        assert!(pk <= p.c3 * up * (1.0 + 1e-12) && pk >= p.c1 * lo * (1.0 - 1e-12));
    }
    // The weak upper envelope dominates the HK upper one up to constants.
    let (w, wres) = envelopes::fit_hk(&k, &sc, s, HkMode::UhkWeak, &opts).unwrap();
    assert!(wres.report.verdict.passes() && w.weak_c2.is_finite());
}

#[test]
fn ndl_constant_is_radius_stable() {
    let r = run_bundled("z1_alpha1", None, "ndl", CheckParams { radii: Some(vec![16.0, 32.0, 64.0]), ..Default::default() });
    assert_eq!(r.verdict, Verdict::Certified);
    assert_eq!(r.get("epsilon"), Some(0.25));
    let c: Vec<f64> = ["c1_r16", "c1_r32", "c1_r64"].iter().map(|k| r.get(k).unwrap()).collect();
    assert!(spread(&c) < 0.3, "{c:?}");
}

#[test]
fn dirichlet_kernel_on_whole_space_is_the_kernel() {
    use heatlab::form::{DirichletForm, JumpKernel};
    use heatlab::space::MetricMeasureSpace;
    let s = std::sync::Arc::new(MetricMeasureSpace::from_graph(3, &[(0, 1), (1, 2)], vec![1.0; 3]).unwrap());
    let f = DirichletForm::assemble(s, 1.0, JumpKernel::none(3)).unwrap();
    let k = f.heat_kernel(&[0.5, 1.0, 2.0], None).unwrap();
    let dk = f.heat_kernel(&[0.5, 1.0, 2.0], Some(&[0, 1, 2])).unwrap();
    for (i, _) in k.times.iter().enumerate() {
        assert!((&k.kernels[i] - &dk.kernels[i]).amax() < 1e-12);
    }
}

#[test]
fn jump_branch_dominates_at_unit_time() {
    let s = segment(64, 1.0);
    let sc = scales(2.0, 1.0);
    let x = s.center();
    for t in [1.0, 4.0] {
        for y in 0..s.len() {
            let l = envelopes::label(&sc, &s, t, x, y, 1.0);
            assert_ne!(l, Region::Gaussian, "t={t} y={y}");
        }
    }
}

#[test]
fn dominance_crossover_matches_continuum_balance() {
    let r = run_bundled("dominance_z1", None, "dominance", CheckParams { t: Some(0.01), ..Default::default() });
    let t: f64 = 0.01;
    // Continuum volumes V(r) = 2r: exp(-d^2/t)/(2 sqrt t) = t/(2 d^2).
    let oracle = bisect(|d| (t / (d * d)).ln() + d * d / t + 0.5 * t.ln(), t.sqrt(), 10.0);
    let got = r.get("crossover").unwrap();
    assert!((got - oracle).abs() <= 2.0 * 0.125, "{got} vs {oracle}");
    assert_eq!(r.get("regions"), Some(3.0));
    assert!(r.get("c3").unwrap().is_finite() && r.get("c4").unwrap().is_finite());
}

#[test]
fn tail_fit_exponent_within_jump_index() {
    let r = run_bundled("z1_alpha1", None, "tail_probability", CheckParams { radii: Some(vec![2.0, 4.0, 8.0, 16.0, 32.0]), ..Default::default() });
    assert_eq!(r.verdict, Verdict::Certified);
    let eta = r.get("eta").unwrap();
    assert!(eta > 0.0 && eta <= r.get("beta1_phi_j").unwrap());
    let d = run_bundled("z1_diffusion", None, "tail_probability", CheckParams { max_speed: Some(6.0), radii: Some(vec![2.0, 4.0, 8.0, 16.0, 32.0]), ..Default::default() });
    assert_eq!(d.verdict, Verdict::Certified);
    assert!(d.get("c_jump").unwrap() < 1e-12);
}

#[test]
fn chain_lower_rate_is_range_stable() {
    let c6 = |lo: f64, hi: f64| {
        let r = run_bundled("z1_diffusion", None, "chain_lower", CheckParams { max_speed: Some(6.0), ratio_range: Some((lo, hi)), ..Default::default() });
        assert_eq!(r.verdict, Verdict::Certified);
        r.get("c6").unwrap()
    };
    let v = [c6(2.0, 4.0), c6(4.0, 8.0), c6(2.0, 8.0)];
    assert!(v.iter().all(|&c| c > 0.0 && c < 1.0), "{v:?}");
    assert!(spread(&v) < 0.3, "{v:?}");
}

#[test]
fn chain_lower_on_gasket_is_finite() {
    let r = run_bundled("gasket_walk", None, "chain_lower", CheckParams::default());
    assert!(r.verdict.passes(), "{:?}", r.notes);
    assert!(r.get("c5").unwrap() > 0.0 && r.get("c6").unwrap() < 1.0);
}

proptest! {
    #[test]
    fn envelopes_are_monotone_in_distance(t in 0.05f64..40.0, k in 0usize..30) {
        let s = segment(64, 1.0);
        let sc = scales(2.0, 1.0);
        let x = 2;
        let (y0, y1) = (x + 1 + k, x + 2 + k);
        let a = envelopes::pc_explicit(&sc, &s, t, x, y0, 1.0);
        let b = envelopes::pc_explicit(&sc, &s, t, x, y1, 1.0);
        prop_assert!(b < a || a == 0.0);
        prop_assert!(envelopes::pj(&sc, &s, t, x, y1) <= envelopes::pj(&sc, &s, t, x, y0));
    }
}
