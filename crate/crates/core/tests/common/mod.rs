//! Independent oracles and model builders shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use heatlab::form::{DirichletForm, HeatKernelTable, HeatMethod, JumpKernel, JumpKind, JumpSpec};
use heatlab::scales::ScaleTriple;
use heatlab::space::{MetricMeasureSpace, SpaceKind, SpaceParams};
use nalgebra::DMatrix;

pub fn segment(side: usize, spacing: f64) -> Arc<MetricMeasureSpace> {
    let p = SpaceParams { dim: 1, side, spacing, ..Default::default() };
    Arc::new(MetricMeasureSpace::build(SpaceKind::LatticeBox, &p).unwrap())
}

pub fn gasket(level: usize) -> Arc<MetricMeasureSpace> {
    let p = SpaceParams { level, ..Default::default() };
    Arc::new(MetricMeasureSpace::build(SpaceKind::Gasket, &p).unwrap())
}

/// Nearest-neighbour diffusion on a unit segment.
pub fn diffusion(side: usize) -> DirichletForm {
    let s = segment(side, 1.0);
    let n = s.len();
    DirichletForm::assemble(s, 1.0, JumpKernel::none(n)).unwrap()
}

/// Diffusion plus `|x-y|^{-1-alpha}` jumps on a unit segment.
pub fn stable_model(side: usize, alpha: f64) -> DirichletForm {
    let s = segment(side, 1.0);
    let spec = JumpSpec { kind: JumpKind::StableLike, alpha, ..Default::default() };
    let j = JumpKernel::build(&s, &spec).unwrap();
    DirichletForm::assemble(s, 1.0, j).unwrap()
}

pub fn scales(beta: f64, alpha: f64) -> ScaleTriple {
    ScaleTriple::powers(beta, alpha).unwrap()
}

/// Thomas algorithm for `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i`.
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Mean exit time from the open ball `{|y| < r}` of the rate-1-per-neighbour
/// walk on Z, started at the centre: `2u(x) - u(x-1) - u(x+1) = 1` inside, `u = 0` outside.
pub fn mean_exit_z1(r: usize) -> f64 {
    let m = 2 * r - 1;
    let u = thomas(&vec![-1.0; m], &vec![2.0; m], &vec![-1.0; m], &vec![1.0; m]);
    u[r - 1]
}

/// Smallest Dirichlet eigenvalue of the unit path with `n` free nodes, by bisection on the Sturm count.
pub fn path_lambda1(n: usize) -> f64 {
    let below = |l: f64| {
        // Number of eigenvalues of tridiag(-1, 2, -1) below l.
        let mut count = 0;
        let mut q = 2.0 - l;
        if q < 0.0 {
            count += 1;
        }
        for _ in 1..n {
            q = 2.0 - l - 1.0 / if q == 0.0 { 1e-300 } else { q };
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let (mut lo, mut hi) = (0.0, 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `sup_s r/s - t/s^beta` divided by `m(t,r)` for `φc = r^beta`, by calculus.
pub fn legendre_ratio_power(beta: f64) -> f64 {
    (1.0 - 1.0 / beta) * beta.powf(-1.0 / (beta - 1.0))
}

/// Bisection root of an increasing function on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest entrywise deviation of `p(s+t) = Σ_z p(s,·,z) p(t,z,·) μ(z)`.
pub fn chapman_kolmogorov_error(k: &HeatKernelTable, i: usize, j: usize, ij: usize) -> f64 {
    let n = k.points.len();
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(k.mu.clone()));
    let prod = &k.kernels[i] * m * &k.kernels[j];
    let scale = k.kernels[ij].amax();
    (0..n * n).map(|e| (prod[e] - k.kernels[ij][e]).abs()).fold(0.0, f64::max) / scale
}

/// `∫_0^∞ q(u,x,y) ν(u) du` for `ν(u) = γ/Γ(1-γ) u^{-1-γ}`, on every pair.
///
/// The kernels come from the exponential action (not the eigenbasis): `m`
/// base times per octave from `u0`, then repeated squaring through
/// `p(2u) = p(u) M p(u)`, and the trapezoid rule in `log u`. The head below
/// `u0` uses `q(u) ≈ q(u0) u/u0`; the tail above the last time uses the
/// stationary value.
pub fn subordination_quadrature(form: &DirichletForm, gamma: f64, u0: f64, octaves: usize, per_octave: usize) -> DMatrix<f64> {
    let n = form.len();
    let c = gamma / statrs::function::gamma::gamma(1.0 - gamma);
    let nu = |u: f64| c * u.powf(-1.0 - gamma);
    let base: Vec<f64> = (0..per_octave).map(|j| u0 * 2f64.powf(j as f64 / per_octave as f64)).collect();
    let tab = form.heat_kernel_with(HeatMethod::ExpAction, &base, None).unwrap();
    // samples[k] = q at u0 2^{k/per_octave}
    let mut samples: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); per_octave * octaves + 1];
    for (j, q) in tab.kernels.into_iter().enumerate() {
        let mut cur = q;
        let mut k = j;
        while k < samples.len() {
            samples[k] = cur.clone();
            let mut weighted = cur.clone();
            for (c, &w) in tab.mu.iter().enumerate() {
                weighted.column_mut(c).scale_mut(w);
            }
            cur = &weighted * &cur;
            k += per_octave;
        }
    }
    let h = std::f64::consts::LN_2 / per_octave as f64;
    let mut acc = DMatrix::zeros(n, n);
    let last = samples.len() - 1;
    for (k, q) in samples.iter().enumerate() {
        let u = u0 * (k as f64 * h).exp();
        let w = if k == 0 || k == last { 0.5 * h } else { h };
        acc += q * (w * nu(u) * u);
    }
    let head = c * u0.powf(-gamma) / (1.0 - gamma);
    acc += &samples[0] * head;
    let u_last = u0 * (last as f64 * h).exp();
    let tail = c * u_last.powf(-gamma) / gamma;
    acc += &samples[last] * tail;
    acc
}

/// Runs one check of a bundled configuration, with the space side overridden when given.
pub fn run_bundled(name: &str, side: Option<usize>, kind: &str, params: heatlab::config::CheckParams) -> heatlab::report::ConditionReport {
    let mut cfg = heatlab::config::bundled(name).unwrap();
    if let Some(s) = side {
        cfg.space.params.side = s;
    }
    let exp = heatlab::suite::Experiment::build(&cfg).unwrap();
    let check = heatlab::config::CheckConfig { kind: kind.into(), label: None, expect: Default::default(), params };
    heatlab::suite::run_check(&exp, &check, &Default::default()).unwrap().result.report
}

/// Largest relative spread `max/min - 1` of positive values.
pub fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(0.0, f64::max);
    hi / lo - 1.0
}
