//! Variational functionals and condition checks: Faber-Krahn, Poincaré,
//! capacities, cut-off Sobolev, exit times, jump tails and UJS.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::DirichletForm;
use crate::linalg::{self, Spectral};
use crate::report::{CheckResult, ConditionReport, RatioTable, Verdict};
use crate::scales::{ScaleFunction, ScaleTriple};
use crate::space::{MetricMeasureSpace, DEFAULT_SEED};

/// Centres and radii sampled by a check; instances violating the interior rule are skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
}

impl BallFamily {
    /// Up to `count` evenly spread interior centres (the most interior first) and
    /// dyadic radii `2h, 4h, ...` up to the margin.
    pub fn default_for(space: &MetricMeasureSpace, count: usize) -> Self {
        let c = space.center();
        let mut centers = vec![c];
        let interior = space.interior();
        if count > 1 && interior.len() > 1 {
            let step = (interior.len() / count).max(1);
            centers.extend(interior.iter().step_by(step).cloned().filter(|&x| x != c).take(count - 1));
        }
        let mut radii = Vec::new();
        let mut r = 2.0 * space.spacing();
        while r <= space.margin() * (1.0 + 1e-12) {
            radii.push(r);
            r *= 2.0;
        }
        BallFamily { centers, radii }
    }

    pub fn with_radii(mut self, radii: &[f64]) -> Self {
        self.radii = radii.to_vec();
        self
    }
}

/// Test functions: constants, bumps, radial tents, low-frequency eigenvectors
/// of the local part and seeded random signed functions.
pub struct TestFunctions {
    low_modes: Vec<DVector<f64>>,
    seed: u64,
}

impl TestFunctions {
    pub fn new(form: &DirichletForm) -> Result<Self> {
        let local = DirichletForm::with_edges(
            form.space_arc(),
            form.edges().to_vec(),
            crate::form::JumpKernel::none(form.len()),
        )?;
        let base = if form.edges().is_empty() { form } else { &local };
        let sp = base.spectral()?;
        let count = sp.len().min(9);
        // Skip the constant mode; it is added explicitly.
        let low_modes = (1..count).map(|k| sp.vectors.column(k).component_mul(&sp.inv_sqrt_mu)).collect();
        Ok(TestFunctions { low_modes, seed: DEFAULT_SEED })
    }

    pub fn at(&self, space: &MetricMeasureSpace, center: usize, radius: f64) -> Vec<DVector<f64>> {
        let n = space.len();
        let mut out = vec![DVector::from_element(n, 1.0)];
        let mut bump = DVector::zeros(n);
        bump[center] = 1.0;
        out.push(bump);
        if let Some(&y) = space.ball(center, 0.5 * radius).last() {
            let mut b = DVector::zeros(n);
            b[y] = 1.0;
            out.push(b);
        }
        out.push(DVector::from_fn(n, |y, _| (1.0 - space.d(center, y) / radius).max(0.0)));
        out.push(DVector::from_fn(n, |y, _| space.d(center, y).min(2.0 * radius)));
        out.extend(self.low_modes.iter().cloned());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ center as u64);
        for _ in 0..2 {
            out.push(DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0)));
        }
        out
    }
}

fn mass(space: &MetricMeasureSpace, set: &[usize]) -> f64 {
    set.iter().map(|&x| space.mu()[x]).sum()
}

fn weighted_sq(space: &MetricMeasureSpace, f: &DVector<f64>, set: &[usize]) -> f64 {
    set.iter().map(|&x| f[x] * f[x] * space.mu()[x]).sum()
}

/// Bottom of the Dirichlet spectrum on `d`.
pub fn lambda1(form: &DirichletForm, d: &[usize]) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::Domain("lambda1 needs a nonempty set".into()));
    }
    Ok(form.dirichlet_spectral(d)?.values[0])
}

fn subsets_of_ball(ball: &[usize], space: &MetricMeasureSpace, x: usize, r: f64, seed: u64) -> Vec<Vec<usize>> {
    let mut out = vec![ball.to_vec()];
    let half = space.ball(x, 0.5 * r);
    if !half.is_empty() && half.len() < ball.len() {
        out.push(half);
    }
    let sparse: Vec<usize> = ball.iter().step_by(2).cloned().collect();
    if sparse.len() < ball.len() {
        out.push(sparse);
    }
    let annulus: Vec<usize> = ball.iter().cloned().filter(|&y| space.d(x, y) >= 0.5 * r).collect();
    if !annulus.is_empty() && annulus.len() < ball.len() {
        out.push(annulus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random: Vec<usize> = ball.iter().cloned().filter(|_| rng.gen_bool(0.5)).collect();
    if !random.is_empty() {
        out.push(random);
    }
    out
}

pub const FK_NU_GRID: [f64; 20] = [
    0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0,
];

/// Faber-Krahn: fits `C(ν) = min λ1(D) φ(r) (μ(D)/V(x,r))^ν` over sampled
/// `D ⊂ B(x,r)` and reports the largest grid `ν` whose constant is within a
/// factor 4 of the constant at the smallest `ν`.
pub fn check_fk(form: &DirichletForm, scales: &ScaleTriple, family: &BallFamily) -> Result<CheckResult> {
    let space = form.space();
    let mut samples = Vec::new();
    let mut table = RatioTable::new(&["x", "r", "size", "lambda1", "phi_r", "rel_volume"]);
    for &x in &family.centers {
        for &r in &family.radii {
            if !space.ball_is_interior(x, r) {
                continue;
            }
            let ball = space.ball(x, r);
            let v = space.volume(x, r);
            for d in subsets_of_ball(&ball, space, x, r, DEFAULT_SEED ^ (x as u64) ^ r.to_bits()) {
                let l1 = lambda1(form, &d)?;
                let rel = mass(space, &d) / v;
                let phi_r = scales.phi().value(r);
                table.push(vec![x as f64, r, d.len() as f64, l1, phi_r, rel]);
                samples.push((l1 * phi_r, rel, x, r));
            }
        }
    }
    if samples.is_empty() {
        return Ok(CheckResult::new(
            ConditionReport::new("FK", Verdict::Skipped).note("no interior ball in the family"),
            table,
        ));
    }
    let c_of = |nu: f64| samples.iter().map(|s| s.0 * s.1.powf(nu)).fold(f64::INFINITY, f64::min);
    let c_min = c_of(FK_NU_GRID[0]);
    let nu = FK_NU_GRID.iter().cloned().filter(|&nu| c_of(nu) >= c_min / 4.0).fold(FK_NU_GRID[0], f64::max);
    let c = c_of(nu);
    let worst = samples
        .iter()
        .min_by(|a, b| (a.0 * a.1.powf(nu)).total_cmp(&(b.0 * b.1.powf(nu))))
        .unwrap();
    let verdict = if c > 0.0 && c.is_finite() { Verdict::Certified } else { Verdict::Failed };
    let report = ConditionReport::new("FK", verdict)
        .constant("C", c)
        .constant("nu", nu)
        .witness("x0", worst.2)
        .witness("r", worst.3)
        .range("r", family.radii.first().cloned().unwrap_or(0.0), family.radii.last().cloned().unwrap_or(0.0))
        .range("nu", FK_NU_GRID[0], FK_NU_GRID[FK_NU_GRID.len() - 1]);
    Ok(CheckResult::new(report, table))
}

/// `sup_f ∫_{B_r}(f - f̄)² dμ / (local and jump energy inside B_{κr})`; infinite when the
/// restricted energy has a null direction that is non-constant on `B_r`.
pub fn poincare_ratio(form: &DirichletForm, center: usize, r: f64, kappa: f64) -> Result<f64> {
    let space = form.space();
    let outer = space.ball(center, kappa * r);
    let inner = space.ball(center, r);
    if inner.is_empty() {
        return Err(Error::Domain("Poincaré ball is empty".into()));
    }
    let m = outer.len();
    let pos = |g: usize| outer.iter().position(|&y| y == g);
    // Energy restricted to pairs inside the outer ball.
    let mut den = DMatrix::zeros(m, m);
    for &(x, y, w) in form.edges() {
        if let (Some(a), Some(b)) = (pos(x), pos(y)) {
            den[(a, a)] += w;
            den[(b, b)] += w;
            den[(a, b)] -= w;
            den[(b, a)] -= w;
        }
    }
    let mu = space.mu();
    for a in 0..m {
        for b in 0..m {
            let (x, y) = (outer[a], outer[b]);
            let j = form.jump().get(x, y);
            if j > 0.0 {
                let c = 2.0 * j * mu[x] * mu[y];
                den[(a, b)] -= c;
                den[(a, a)] += c;
            }
        }
    }
    linalg::symmetrize_in_place(&mut den);
    // Centred mass on the inner ball, extended by zero.
    let total = mass(space, &inner);
    let idx: Vec<usize> = inner.iter().map(|&g| pos(g).expect("inner ball inside outer")).collect();
    let mut num = DMatrix::<f64>::zeros(m, m);
    for (i, &a) in idx.iter().enumerate() {
        num[(a, a)] += mu[inner[i]];
        for (k, &b) in idx.iter().enumerate() {
            num[(a, b)] -= mu[inner[i]] * mu[inner[k]] / total;
        }
    }
    let eig = SymmetricEigen::new(den);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let thresh = 1e-12 * top.max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > thresh).collect();
    let num_scale = num.amax().max(f64::MIN_POSITIVE);
    for k in (0..m).filter(|k| !keep.contains(k)) {
        let v = eig.eigenvectors.column(k);
        if v.dot(&(&num * v)) > 1e-9 * num_scale {
            return Ok(f64::INFINITY);
        }
    }
    let p = DMatrix::from_fn(m, keep.len(), |r, c| {
        eig.eigenvectors[(r, keep[c])] / eig.eigenvalues[keep[c]].sqrt()
    });
    let reduced = p.transpose() * &num * &p;
    let top_num = SymmetricEigen::new(reduced).eigenvalues.iter().cloned().fold(0.0, f64::max);
    Ok(top_num)
}

/// `C_PI(B) = poincare_ratio / φ(r)`.
pub fn poincare(form: &DirichletForm, scales: &ScaleTriple, center: usize, r: f64, kappa: f64) -> Result<f64> {
    Ok(poincare_ratio(form, center, r, kappa)? / scales.phi().value(r))
}

/// Poincaré constants for `κ = 1` and `κ = 2`; certified on the first `κ`
/// with a finite constant.
pub fn check_pi(form: &DirichletForm, scales: &ScaleTriple, family: &BallFamily) -> Result<CheckResult> {
    let space = form.space();
    let mut table = RatioTable::new(&["x", "r", "kappa", "C"]);
    let mut report = ConditionReport::new("PI", Verdict::Skipped);
    let mut certified_kappa = None;
    for kappa in [1.0, 2.0] {
        let mut worst = (0.0f64, 0usize, 0.0f64);
        let mut any = false;
        for &x in &family.centers {
            for &r in &family.radii {
                if !space.ball_is_interior(x, kappa * r) {
                    continue;
                }
                any = true;
                let c = poincare(form, scales, x, r, kappa)?;
                table.push(vec![x as f64, r, kappa, c]);
                if c > worst.0 || c.is_infinite() {
                    worst = (c, x, r);
                }
            }
        }
        if !any {
            continue;
        }
        let key = if kappa == 1.0 { "C_kappa1" } else { "C_kappa2" };
        report = report.constant(key, worst.0);
        if worst.0.is_finite() && certified_kappa.is_none() {
            certified_kappa = Some(kappa);
            report = report.constant("C", worst.0).constant("kappa", kappa).witness("x0", worst.1).witness("r", worst.2);
        }
        if worst.0.is_infinite() {
            report = report.witness(&format!("x0_kappa{}", kappa as u32), worst.1).witness(&format!("r_kappa{}", kappa as u32), worst.2);
        }
    }
    report.verdict = match (certified_kappa, report.constants.is_empty()) {
        (_, true) => Verdict::Skipped,
        (Some(_), _) => Verdict::Certified,
        (None, _) => Verdict::Failed,
    };
    if let (Some(a), Some(b)) = (family.radii.first(), family.radii.last()) {
        report = report.range("r", *a, *b);
    }
    Ok(CheckResult::new(report, table))
}

/// Relative capacity of `a` in `b` with its equilibrium potential.
pub fn capacity(form: &DirichletForm, a: &[usize], b: &[usize]) -> Result<(f64, DVector<f64>)> {
    let n = form.len();
    if a.is_empty() {
        return Err(Error::Domain("capacity needs a nonempty inner set".into()));
    }
    let mut in_b = vec![false; n];
    for &y in b {
        in_b[y] = true;
    }
    if let Some(&x) = a.iter().find(|&&x| !in_b[x]) {
        return Err(Error::Domain(format!("inner set is not contained in the outer set (point {x})")));
    }
    if b.len() >= n {
        return Err(Error::Domain("outer set must have a nonempty complement".into()));
    }
    let mut in_a = vec![false; n];
    for &y in a {
        in_a[y] = true;
    }
    let free: Vec<usize> = b.iter().cloned().filter(|&y| !in_a[y]).collect();
    let mut phi = DVector::zeros(n);
    for &y in a {
        phi[y] = 1.0;
    }
    if !free.is_empty() {
        let k = form.energy_matrix();
        let kff = linalg::restrict(k, &free);
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&f| -a.iter().map(|&y| k[(f, y)]).sum::<f64>()));
        let sol = linalg::solve_spd(&kff, &rhs)?;
        for (i, &f) in free.iter().enumerate() {
            phi[f] = sol[i];
        }
    }
    Ok((form.energy(&phi), phi))
}

/// `E(f²φ, φ)`.
pub fn gcap_value(form: &DirichletForm, f: &DVector<f64>, phi: &DVector<f64>) -> f64 {
    let f2phi = f.component_mul(f).component_mul(phi);
    form.energy_bilinear(&f2phi, phi)
}

/// Radial ramp cut-off for `B(x0,R) ⊂ B(x0,R+r)`, scaled to height `kappa`.
pub fn radial_ramp(space: &MetricMeasureSpace, x0: usize, big_r: f64, r: f64, kappa: f64) -> DVector<f64> {
    DVector::from_fn(space.len(), |y, _| {
        let d = space.d(x0, y);
        if d >= big_r + r {
            0.0
        } else {
            (kappa * (big_r + r - d) / r).clamp(0.0, kappa)
        }
    })
}

/// Minimum of `E(f²φ, φ)` over candidate κ-cut-offs for `B(x0,R) ⊂ B(x0,R+r)`:
/// the equilibrium potential, its `κ` multiple, and radial ramps. Returns the
/// value and the index of the best candidate.
pub fn generalized_capacity(
    form: &DirichletForm,
    f: &DVector<f64>,
    x0: usize,
    big_r: f64,
    r: f64,
    kappa: f64,
) -> Result<(f64, usize)> {
    let space = form.space();
    let a = space.ball(x0, big_r);
    let b = space.ball(x0, big_r + r);
    let (_, eq) = capacity(form, &a, &b)?;
    let mut candidates = vec![eq.clone()];
    if kappa > 1.0 {
        candidates.push(eq * kappa);
    }
    candidates.push(radial_ramp(space, x0, big_r, r, 1.0));
    if kappa > 1.0 {
        candidates.push(radial_ramp(space, x0, big_r, r, kappa));
    }
    Ok(candidates
        .iter()
        .enumerate()
        .map(|(i, phi)| (gcap_value(form, f, phi), i))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one candidate"))
}

/// `(R, r)` pairs with `r = R/2`, drawn from the family radii.
fn annulus_pairs(family: &BallFamily) -> Vec<(f64, f64)> {
    family.radii.iter().map(|&big| (big, 0.5 * big)).collect()
}

/// Generalized capacity certificate: fits `C` in `E(f²φ,φ) ≤ C/φ(r) ∫_{B(R+r)} f²`
/// for `κ = 1` and `κ = 2`.
pub fn check_gcap(form: &DirichletForm, scales: &ScaleTriple, family: &BallFamily) -> Result<CheckResult> {
    let space = form.space();
    let tf = TestFunctions::new(form)?;
    let mut table = RatioTable::new(&["x", "R", "r", "kappa", "f", "ratio"]);
    let mut report = ConditionReport::new("Gcap", Verdict::Skipped);
    for kappa in [1.0, 2.0] {
        let mut worst = (0.0f64, 0usize, 0.0, 0.0);
        let mut any = false;
        for &x in &family.centers {
            for (big_r, r) in annulus_pairs(family) {
                if !space.ball_is_interior(x, big_r + r) {
                    continue;
                }
                let ball = space.ball(x, big_r + r);
                for (fi, f) in tf.at(space, x, big_r + r).iter().enumerate() {
                    let mass = weighted_sq(space, f, &ball);
                    if mass <= 0.0 {
                        continue;
                    }
                    any = true;
                    let (val, _) = generalized_capacity(form, f, x, big_r, r, kappa)?;
                    let ratio = val.max(0.0) * scales.phi().value(r) / mass;
                    table.push(vec![x as f64, big_r, r, kappa, fi as f64, ratio]);
                    if ratio > worst.0 {
                        worst = (ratio, x, big_r, r);
                    }
                }
            }
        }
        if !any {
            continue;
        }
        let key = if kappa == 1.0 { "C_kappa1" } else { "C_kappa2" };
        report = report.constant(key, worst.0);
        if kappa == 1.0 {
            report = report.constant("C", worst.0).constant("kappa", 1.0).witness("x0", worst.1).witness("R", worst.2).witness("r", worst.3);
        }
    }
    if !report.constants.is_empty() {
        let c = report.get("C").unwrap_or(f64::INFINITY);
        report.verdict = if c.is_finite() { Verdict::OneSidedCertificate } else { Verdict::Failed };
    }
    Ok(CheckResult::new(report, table))
}

/// Both sides of the cut-off Sobolev inequality for the radial ramp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsTerms {
    pub lhs: f64,
    pub energy: f64,
    pub mass: f64,
}

pub fn cs_terms(form: &DirichletForm, f: &DVector<f64>, x0: usize, big_r: f64, r: f64, c0: f64, phi_r: f64) -> CsTerms {
    let space = form.space();
    let phi = radial_ramp(space, x0, big_r, r, 1.0);
    let b1 = space.ball(x0, big_r + r);
    let b2 = space.ball(x0, big_r + (1.0 + c0) * r);
    let g = form.champ_bilinear(&phi, &phi).total();
    let lhs = b2.iter().map(|&x| f[x] * f[x] * g[x]).sum();
    let gc = form.champ_bilinear(f, f).gamma_c;
    let mu = space.mu();
    let mut energy: f64 = b1.iter().map(|&x| phi[x] * phi[x] * gc[x]).sum();
    for &x in &b1 {
        for &y in &b2 {
            let j = form.jump().get(x, y);
            if j > 0.0 {
                energy += phi[x] * phi[x] * (f[x] - f[y]).powi(2) * j * mu[x] * mu[y];
            }
        }
    }
    CsTerms { lhs, energy, mass: weighted_sq(space, f, &b2) / phi_r }
}

/// Cut-off Sobolev certificate with radial ramps: for the configured `C1`, fits
/// `C2 = max (LHS - C1·energy)_+ / mass`; also reports `C2` at `C1 = 0` and the
/// worst `C2` over the truncated forms at `ρ ∈ {r, 2r, ∞}`.
pub fn check_cs(form: &DirichletForm, scales: &ScaleTriple, family: &BallFamily, c0: f64, c1: f64) -> Result<CheckResult> {
    let space = form.space();
    let tf = TestFunctions::new(form)?;
    let mut table = RatioTable::new(&["x", "R", "r", "f", "lhs", "energy", "mass"]);
    let mut c2 = 0.0f64;
    let mut c2_zero = 0.0f64;
    let mut c2_rho = 0.0f64;
    let mut worst = (0usize, 0.0, 0.0);
    let mut any = false;
    for &x in &family.centers {
        for (big_r, r) in annulus_pairs(family) {
            if !space.ball_is_interior(x, big_r + (1.0 + c0) * r) {
                continue;
            }
            let phi_r = scales.phi().value(r);
            let truncated: Vec<DirichletForm> = [r, 2.0 * r]
                .iter()
                .map(|&rho| form.truncate(rho).map(|t| t.form))
                .collect::<Result<_>>()?;
            for (fi, f) in tf.at(space, x, big_r + r).iter().enumerate() {
                let t = cs_terms(form, f, x, big_r, r, c0, phi_r);
                if t.mass <= 0.0 {
                    continue;
                }
                any = true;
                table.push(vec![x as f64, big_r, r, fi as f64, t.lhs, t.energy, t.mass]);
                let v = (t.lhs - c1 * t.energy).max(0.0) / t.mass;
                if v > c2 {
                    c2 = v;
                    worst = (x, big_r, r);
                }
                c2_zero = c2_zero.max(t.lhs.max(0.0) / t.mass);
                c2_rho = c2_rho.max(v);
                for tr in &truncated {
                    let tt = cs_terms(tr, f, x, big_r, r, c0, phi_r);
                    c2_rho = c2_rho.max((tt.lhs - c1 * tt.energy).max(0.0) / tt.mass);
                }
            }
        }
    }
    if !any {
        return Ok(CheckResult::new(ConditionReport::new("CS", Verdict::Skipped).note("no interior annulus in the family"), table));
    }
    let verdict = if c2.is_finite() { Verdict::OneSidedCertificate } else { Verdict::Failed };
    let report = ConditionReport::new("CS", verdict)
        .constant("C0", c0)
        .constant("C1", c1)
        .constant("C2", c2)
        .constant("C2_at_C1_zero", c2_zero)
        .constant("C2_truncated_max", c2_rho)
        .witness("x0", worst.0)
        .witness("R", worst.1)
        .witness("r", worst.2);
    Ok(CheckResult::new(report, table))
}

/// Exit-time conditions: `E_φ` (two-sided `c1`) and `EP_{φ,≤}` (`c`).
pub fn check_exit(form: &DirichletForm, scales: &ScaleTriple, family: &BallFamily) -> Result<(CheckResult, CheckResult)> {
    let space = form.space();
    let mut t_e = RatioTable::new(&["x", "r", "mean_exit", "phi_r"]);
    let mut t_p = RatioTable::new(&["x", "r", "t", "exit_probability", "ratio"]);
    let mut c1 = 0.0f64;
    let mut c_ep = 0.0f64;
    let mut w_e = (0usize, 0.0);
    let mut w_p = (0usize, 0.0, 0.0);
    let fractions = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0];
    let mut any = false;
    for &x in &family.centers {
        for &r in &family.radii {
            if !space.ball_is_interior(x, r) {
                continue;
            }
            any = true;
            let ball = space.ball(x, r);
            let phi_r = scales.phi().value(r);
            let times: Vec<f64> = fractions.iter().map(|f| f * phi_r).collect();
            let stats = form.exit_stats(&ball, &times)?;
            let k = ball.iter().position(|&y| y == x).expect("centre in its ball");
            let e = stats.mean[k];
            t_e.push(vec![x as f64, r, e, phi_r]);
            let v = (phi_r / e).max(e / phi_r);
            if v > c1 {
                c1 = v;
                w_e = (x, r);
            }
            for (i, &t) in times.iter().enumerate() {
                let p = (1.0 - stats.survival[i][k]).max(0.0);
                let ratio = p * phi_r / t;
                t_p.push(vec![x as f64, r, t, p, ratio]);
                if ratio > c_ep {
                    c_ep = ratio;
                    w_p = (x, r, t);
                }
            }
        }
    }
    if !any {
        let skip = |n: &str| CheckResult::new(ConditionReport::new(n, Verdict::Skipped), RatioTable::default());
        return Ok((skip("E_phi"), skip("EP_phi_le")));
    }
    let lo = family.radii.first().cloned().unwrap_or(0.0);
    let hi = family.radii.last().cloned().unwrap_or(0.0);
    let e = ConditionReport::new("E_phi", if c1.is_finite() { Verdict::Certified } else { Verdict::Failed })
        .constant("c1", c1)
        .witness("x0", w_e.0)
        .witness("r", w_e.1)
        .range("r", lo, hi);
    let p = ConditionReport::new("EP_phi_le", if c_ep.is_finite() { Verdict::Certified } else { Verdict::Failed })
        .constant("c", c_ep)
        .witness("x0", w_p.0)
        .witness("r", w_p.1)
        .witness("t", w_p.2)
        .range("r", lo, hi);
    Ok((CheckResult::new(e, t_e), CheckResult::new(p, t_p)))
}

/// `Tail_ψ(u; x0, r) = ψ(r) Σ_{d(x0,z) ≥ r} |u(z)| μ(z) / (V(x0,d) ψ(d))`.
pub fn tail_psi(space: &MetricMeasureSpace, psi: &ScaleFunction, u: &DVector<f64>, x0: usize, r: f64) -> f64 {
    psi.value(r)
        * (0..space.len())
            .filter(|&z| space.d(x0, z) >= r && space.d(x0, z).is_finite())
            .map(|z| {
                let d = space.d(x0, z);
                u[z].abs() * space.mu()[z] / (space.volume(x0, d) * psi.value(d))
            })
            .sum::<f64>()
}

/// Jump tail bound `Σ_{d ≥ r} J(x,y) μ(y) ≤ c1/φj(r)`, the UJS average bound,
/// and `Tail_φj(1; x, r)`.
pub fn tail_and_ujs(form: &DirichletForm, scales: &ScaleTriple, family: &BallFamily) -> Result<(CheckResult, CheckResult)> {
    let space = form.space();
    let jump = form.jump();
    let n = space.len();
    let mu = space.mu();
    let mut t_tail = RatioTable::new(&["x", "r", "tail", "ratio", "tail_psi_one"]);
    let mut t_ujs = RatioTable::new(&["x", "y", "r", "ratio"]);
    let mut c_tail = 0.0f64;
    let mut c_tail_psi = 0.0f64;
    let mut c_ujs = 0.0f64;
    let mut w_tail = (0usize, 0.0);
    let mut w_ujs = (0usize, 0usize, 0.0);
    let ones = DVector::from_element(n, 1.0);
    for &x in &family.centers {
        for &r in &family.radii {
            let tail: f64 = (0..n).filter(|&y| space.d(x, y) >= r).map(|y| jump.get(x, y) * mu[y]).sum();
            let ratio = tail * scales.phi_j().value(r);
            let tp = tail_psi(space, scales.phi_j(), &ones, x, r);
            t_tail.push(vec![x as f64, r, tail, ratio, tp]);
            c_tail_psi = c_tail_psi.max(tp);
            if ratio > c_tail {
                c_tail = ratio;
                w_tail = (x, r);
            }
            if !space.ball_is_interior(x, r) {
                continue;
            }
            let ball = space.ball(x, r);
            let v = space.volume(x, r);
            for y in (0..n).filter(|&y| space.d(x, y) >= 2.0 * r && space.d(x, y).is_finite()) {
                let j = jump.get(x, y);
                if j <= 0.0 {
                    continue;
                }
                let avg: f64 = ball.iter().map(|&z| jump.get(z, y) * mu[z]).sum::<f64>() / v;
                let ratio = if avg > 0.0 { j / avg } else { f64::INFINITY };
                t_ujs.push(vec![x as f64, y as f64, r, ratio]);
                if ratio > c_ujs {
                    c_ujs = ratio;
                    w_ujs = (x, y, r);
                }
            }
        }
    }
    let tail = ConditionReport::new("J_tail", if c_tail.is_finite() { Verdict::Certified } else { Verdict::Failed })
        .constant("c1", c_tail)
        .constant("tail_psi_one_max", c_tail_psi)
        .witness("x0", w_tail.0)
        .witness("r", w_tail.1);
    let ujs_verdict = if t_ujs.is_empty() {
        Verdict::Skipped
    } else if c_ujs.is_finite() {
        Verdict::Certified
    } else {
        Verdict::Failed
    };
    let ujs = ConditionReport::new("UJS", ujs_verdict)
        .constant("c", c_ujs)
        .witness("x", w_ujs.0)
        .witness("y", w_ujs.1)
        .witness("r", w_ujs.2);
    Ok((CheckResult::new(tail, t_tail), CheckResult::new(ujs, t_ujs)))
}

/// Options for the two-sided jump-kernel comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpFitOptions {
    /// Distances whose normalized intensities define the reference band;
    /// defaults to the upper half of the tested log-distance range.
    pub reference_range: Option<(f64, f64)>,
    /// Band violation that marks a side as failing when it also grows as `d` shrinks.
    pub violation_threshold: f64,
}

impl Default for JumpFitOptions {
    fn default() -> Self {
        JumpFitOptions { reference_range: None, violation_threshold: 4.0 }
    }
}

/// Two-sided comparison `c1 ≤ J(x,y) V(x,d) ψ(d) ≤ c2`, with a per-distance
/// violation profile against a reference band. A violation is the ratio of
/// sandwich constants needed to cover both the band and that distance.
pub fn check_jump_two_sided(
    form: &DirichletForm,
    psi: &ScaleFunction,
    family: &BallFamily,
    options: &JumpFitOptions,
) -> Result<CheckResult> {
    let space = form.space();
    let jump = form.jump();
    // Per distance level: (min q, max q).
    let mut levels: Vec<(f64, f64, f64)> = Vec::new();
    for &x in &family.centers {
        let reach = space.boundary_distance(x);
        for y in 0..space.len() {
            let d = space.d(x, y);
            if y == x || !(d <= reach) || !d.is_finite() {
                continue;
            }
            let q = jump.get(x, y) * space.volume(x, d) * psi.value(d);
            match levels.iter_mut().find(|l| (l.0 - d).abs() <= 1e-12 * d) {
                Some(l) => {
                    l.1 = l.1.min(q);
                    l.2 = l.2.max(q);
                }
                None => levels.push((d, q, q)),
            }
        }
    }
    let mut table = RatioTable::new(&["d", "q_min", "q_max", "lower_violation", "upper_violation"]);
    if levels.is_empty() {
        return Ok(CheckResult::new(ConditionReport::new("J_phi_j", Verdict::Skipped), table));
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (dmin, dmax) = (levels[0].0, levels[levels.len() - 1].0);
    let (ref_lo, ref_hi) = options.reference_range.unwrap_or(((dmin * dmax).sqrt(), dmax));
    let reference: Vec<_> = levels.iter().filter(|l| l.0 >= ref_lo && l.0 <= ref_hi).collect();
    if reference.is_empty() {
        return Err(Error::Domain("jump reference range contains no tested distance".into()));
    }
    let band_lo = reference.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let band_hi = reference.iter().map(|l| l.2).fold(0.0, f64::max);
    let c1 = levels.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let c2 = levels.iter().map(|l| l.2).fold(0.0, f64::max);
    let mut lower_v = Vec::new();
    let mut upper_v = Vec::new();
    for l in &levels {
        // Sandwich ratio c2/c1 needed to cover the band together with this distance.
        let lv = if l.1 > 0.0 { band_hi / l.1 } else { f64::INFINITY };
        let uv = if band_lo > 0.0 { l.2 / band_lo } else { f64::INFINITY };
        lower_v.push(lv);
        upper_v.push(uv);
        table.push(vec![l.0, l.1, l.2, lv, uv]);
    }
    // A side fails when its violation exceeds the threshold below the reference
    // range and does not decrease as the distance shrinks.
    let small: Vec<usize> = (0..levels.len()).filter(|&i| levels[i].0 < ref_lo).collect();
    let side_fails = |v: &[f64]| -> bool {
        if small.is_empty() {
            return false;
        }
        let first = small[0];
        let monotone = small.windows(2).all(|w| v[w[0]] >= v[w[1]] * (1.0 - 1e-12));
        v[first] >= options.violation_threshold && monotone
    };
    let lower_fails = side_fails(&lower_v);
    let upper_fails = side_fails(&upper_v);
    let verdict = if lower_fails || upper_fails || !(c1 > 0.0) || !c2.is_finite() {
        Verdict::Failed
    } else {
        Verdict::Certified
    };
    let max_lower = lower_v.iter().cloned().fold(0.0, f64::max);
    let max_upper = upper_v.iter().cloned().fold(0.0, f64::max);
    let mut report = ConditionReport::new("J_phi_j", verdict)
        .constant("c1", c1)
        .constant("c2", c2)
        .constant("band_lower", band_lo)
        .constant("band_upper", band_hi)
        .constant("lower_violation_max", max_lower)
        .constant("upper_violation_max", max_upper)
        .range("d", dmin, dmax)
        .range("reference_d", ref_lo, ref_hi);
    if lower_fails {
        report = report.note("lower bound J_{phi_j,>=} fails: violation grows as d decreases");
    }
    if upper_fails {
        report = report.note("upper bound J_{phi_j,<=} fails: violation grows as d decreases");
    }
    report = report.witness("d_smallest", dmin).witness("lower_violation_at_smallest", lower_v[0]);
    Ok(CheckResult::new(report, table))
}

/// `λ1(D)` together with `max_x E^x τ_D`, for the spectral-exit duality.
pub fn lambda1_and_max_exit(form: &DirichletForm, d: &[usize]) -> Result<(f64, f64)> {
    let l1 = lambda1(form, d)?;
    let e = form.mean_exit(d)?;
    Ok((l1, e.iter().cloned().fold(0.0, f64::max)))
}

/// Spectral data of `form` restricted to `d` (re-exported for downstream checks).
pub fn dirichlet_spectral(form: &DirichletForm, d: &[usize]) -> Result<Spectral> {
    form.dirichlet_spectral(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{JumpKernel, JumpKind, JumpSpec};
    use crate::space::SpaceParams;
    use std::sync::Arc;

    fn path_form(n: usize) -> DirichletForm {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let s = Arc::new(MetricMeasureSpace::from_graph(n, &edges, vec![1.0; n]).unwrap());
        DirichletForm::assemble(s, 1.0, JumpKernel::none(n)).unwrap()
    }

    fn z1(side: usize, jumps: bool) -> DirichletForm {
        let s = Arc::new(MetricMeasureSpace::lattice_box(&SpaceParams { dim: 1, side, ..Default::default() }).unwrap());
        let j = if jumps {
            JumpKernel::build(&s, &JumpSpec { kind: JumpKind::StableLike, alpha: 1.0, ..Default::default() }).unwrap()
        } else {
            JumpKernel::none(side)
        };
        DirichletForm::assemble(s, 1.0, j).unwrap()
    }

    #[test]
    fn lambda1_examples() {
        let f = path_form(3);
        assert!((lambda1(&f, &[1]).unwrap() - 2.0).abs() < 1e-14);
        let f = path_form(12);
        for n in 1..=10usize {
            let d: Vec<usize> = (1..=n).collect();
            let oracle = 4.0 * (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
            assert!((lambda1(&f, &d).unwrap() - oracle).abs() < 1e-12);
        }
        assert!(lambda1(&f, &[]).is_err());
    }

    #[test]
    fn poincare_two_points() {
        let s = Arc::new(MetricMeasureSpace::from_graph(2, &[(0, 1)], vec![1.0; 2]).unwrap());
        let w = 3.0;
        let f = DirichletForm::assemble(s, w, JumpKernel::none(2)).unwrap();
        let ratio = poincare_ratio(&f, 0, 1.5, 1.0).unwrap();
        assert!((ratio - 1.0 / (2.0 * w)).abs() < 1e-12);
    }

    #[test]
    fn poincare_disconnected_is_infinite() {
        let s = Arc::new(MetricMeasureSpace::from_distance_matrix(vec![0.0, 1.0, 1.0, 0.0], vec![1.0; 2], vec![]).unwrap());
        let f = DirichletForm::assemble(s, 1.0, JumpKernel::none(2)).unwrap();
        assert!(poincare_ratio(&f, 0, 1.5, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn capacity_series_resistance() {
        let f = path_form(41);
        for b in [3usize, 5, 10] {
            let outer: Vec<usize> = (20 - (b - 1)..=20 + (b - 1)).collect();
            let (cap, phi) = capacity(&f, &[20], &outer).unwrap();
            assert!((cap - 2.0 / b as f64).abs() < 1e-12);
            assert!((f.energy(&phi) - cap).abs() <= 1e-10 * cap);
        }
        assert!(capacity(&f, &[0], &[1, 2]).is_err());
        let (cap, _) = capacity(&f, &[20], &[20]).unwrap();
        assert!((cap - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gcap_reduces_to_capacity() {
        let f = z1(64, true);
        let x0 = 32;
        let (cap, _) = capacity(&f, &f.space().ball(x0, 4.0), &f.space().ball(x0, 6.0)).unwrap();
        let (g, _) = generalized_capacity(&f, &DVector::from_element(64, 1.0), x0, 4.0, 2.0, 1.0).unwrap();
        assert!(g <= cap * (1.0 + 1e-10));
        let (z, _) = generalized_capacity(&f, &DVector::zeros(64), x0, 4.0, 2.0, 2.0).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn exit_constant_two_for_diffusion() {
        let f = z1(129, false);
        let sc = ScaleTriple::powers(2.0, 2.0).unwrap();
        let fam = BallFamily { centers: vec![64], radii: vec![8.0, 16.0] };
        let (e, p) = check_exit(&f, &sc, &fam).unwrap();
        assert!((e.report.get("c1").unwrap() - 2.0).abs() < 1e-9);
        assert!(p.report.verdict.passes());
    }

    #[test]
    fn jumps_shorten_exit_times() {
        let (a, b) = (z1(65, false), z1(65, true));
        let ball = a.space().ball(32, 8.0);
        let (ea, eb) = (a.mean_exit(&ball).unwrap(), b.mean_exit(&ball).unwrap());
        assert!(ea.iter().zip(eb.iter()).all(|(x, y)| y <= x));
    }

    #[test]
    fn tail_integral_comparison() {
        let f = z1(129, true);
        let sc = ScaleTriple::powers(2.0, 1.0).unwrap();
        let fam = BallFamily { centers: vec![64], radii: vec![2.0, 4.0, 8.0] };
        let (tail, ujs) = tail_and_ujs(&f, &sc, &fam).unwrap();
        // Σ_{|k| ≥ r} |k|^{-2} ≤ 2(1/r + 1/r²), so c1 ≤ 2(1 + 1/r).
        assert!(tail.report.get("c1").unwrap() <= 2.0 * (1.0 + 0.5));
        assert!(ujs.report.get("c").unwrap() <= 4.0);
    }

    #[test]
    fn spectral_exit_duality() {
        let f = z1(65, true);
        let ball = f.space().ball(32, 10.0);
        let (l1, e) = lambda1_and_max_exit(&f, &ball).unwrap();
        assert!(l1 >= 1.0 / e * (1.0 - 1e-12));
    }
}
