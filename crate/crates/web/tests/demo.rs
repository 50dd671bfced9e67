use heatlab_web::{dominance, kernel_profile, subordination_intensity};

#[test]
fn profile_decays_and_stays_within_its_envelope() {
    let p = kernel_profile(128, 1.0, 1.0, 4.0).unwrap();
    assert_eq!(p.distance[0], 0.0);
    assert!(p.kernel.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    let ratios: Vec<f64> = p.kernel.iter().zip(&p.envelope).map(|(a, b)| a / b).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
    assert!(lo > 0.0 && hi < 100.0, "ratio range [{lo}, {hi}]");
}

#[test]
fn profile_without_jumps_has_no_jump_branch() {
    let p = kernel_profile(64, 1.0, 0.0, 2.0).unwrap();
    assert!(p.jump.iter().all(|&j| j == 0.0));
    // Mass near the centre at small times.
    assert!(p.kernel[0] > p.kernel[4]);
}

#[test]
fn dominance_has_three_regions_on_a_fine_lattice() {
    let d = dominance(256, 0.125, 1.0, 0.01).unwrap();
    assert_eq!(d.labels.len(), 256 * 256);
    assert_eq!(d.counts.iter().sum::<usize>(), 256 * 256);
    assert!(d.counts.iter().all(|&c| c > 0), "{:?}", d.counts);
    // The diagonal pair is always in the diagonal region.
    assert!((0..256).all(|x| d.labels[x * 256 + x] == 0));
    assert!(d.crossover.is_some());
}

#[test]
fn unit_lattice_has_no_gaussian_region() {
    // The Gaussian branch beats t/(V φj) only for t below the lattice scale.
    let d = dominance(64, 1.0, 1.0, 4.0).unwrap();
    assert_eq!(d.counts[1], 0);
}

#[test]
fn subordinated_tail_steepens_with_the_index() {
    let slopes: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&g| subordination_intensity(128, 0.0, g).unwrap().slope).collect();
    assert!(slopes[0] > slopes[1] && slopes[1] > slopes[2], "{slopes:?}");
    // Away from the heaviest tails the box barely distorts the power law 1 + 2γ.
    for (g, s) in [(0.5, slopes[1]), (0.75, slopes[2])] {
        assert!((s + 1.0 + 2.0 * g).abs() < 0.2, "gamma {g}: slope {s}");
    }
}

#[test]
fn drift_scales_the_local_part_only() {
    let a = subordination_intensity(64, 0.0, 0.5).unwrap();
    let b = subordination_intensity(64, 2.0, 0.5).unwrap();
    // The base form has no jumps, so the drift term adds no jump intensity.
    for i in 0..a.intensity.len() {
        assert!((a.intensity[i] - b.intensity[i]).abs() <= 1e-12 * a.intensity[i].abs().max(1e-300));
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(kernel_profile(4, 1.0, 1.0, 1.0).is_err());
    assert!(kernel_profile(64, 1.0, 2.5, 1.0).is_err());
    assert!(kernel_profile(64, 1.0, 1.0, -1.0).is_err());
    assert!(dominance(64, 1.0, 0.0, 1.0).is_err());
    assert!(subordination_intensity(64, 0.0, 1.5).is_err());
    assert!(subordination_intensity(64, -1.0, 0.5).is_err());
}
