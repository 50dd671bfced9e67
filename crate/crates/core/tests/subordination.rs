mod common;

use heatlab::form::HeatMethod;

#[test]
fn spectral_intensities_match_time_quadrature_on_a_path() {
    let form = common::diffusion(48);
    let sub = form.subordinate(1.0, 0.5).unwrap();
    let quad = common::subordination_quadrature(&form, 0.5, 1e-6, 44, 16);
    let mut worst = 0.0f64;
    for x in 10..38 {
        for y in 0..48 {
            if x == y {
                continue;
            }
            // The energy counts each unordered pair twice, so the generator
            // density is twice the stored intensity.
            let spectral = 2.0 * sub.jump().get(x, y);
            worst = worst.max((spectral - quad[(x, y)]).abs() / quad[(x, y)]);
        }
    }
    assert!(worst < 0.01, "worst relative error {worst}");
}

#[test]
fn half_index_tail_is_inverse_square() {
    let form = common::diffusion(128);
    let sub = form.subordinate(1.0, 0.5).unwrap();
    let x = 64;
    let q: Vec<f64> = (4..=24).map(|d| sub.jump().get(x, x + d) * (d * d) as f64).collect();
    let (lo, hi) = q.iter().fold((f64::INFINITY, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
    assert!(lo > 0.0 && hi / lo < 10.0, "J d^2 ranges over [{lo}, {hi}]");
}

#[test]
fn unit_index_without_drift_is_the_base_semigroup() {
    let form = common::stable_model(32, 1.0);
    let sub = form.subordinate(0.0, 1.0).unwrap();
    let times = [0.1, 1.0, 10.0];
    let base = form.heat_kernel(&times, None).unwrap();
    // The subordinated form is rebuilt from its jump kernel alone and
    // evaluated by the exponential action.
    let rebuilt = sub.form.heat_kernel_with(HeatMethod::ExpAction, &times, None).unwrap();
    for i in 0..times.len() {
        let err = (&base.kernels[i] - &rebuilt.kernels[i]).amax();
        assert!(err < 1e-8, "t = {}: {err}", times[i]);
    }
    let functional = sub.heat_kernel(&times).unwrap();
    for i in 0..times.len() {
        assert!((&base.kernels[i] - &functional.kernels[i]).amax() < 1e-8);
    }
}

#[test]
fn subordinated_semigroup_property() {
    let form = common::diffusion(40);
    let sub = form.subordinate(1.0, 0.5).unwrap();
    let k = sub.heat_kernel(&[0.5, 1.5, 2.0]).unwrap();
    assert!(common::chapman_kolmogorov_error(&k, 0, 1, 2) < 1e-10);
}

#[test]
fn drift_only_rescales_the_local_part() {
    let form = common::diffusion(24);
    let a = form.subordinate(0.0, 0.5).unwrap();
    let b = form.subordinate(3.0, 0.5).unwrap();
    assert_eq!(a.jump().entries(), b.jump().entries());
    assert!(a.form.edges().is_empty());
    assert!(b.form.edges().iter().all(|e| (e.2 - 3.0).abs() < 1e-15));
}
