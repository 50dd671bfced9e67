//! Harmonic and caloric functions on balls and cylinders, and the PHI, PHR and
//! EHR checks.
//!
//! Caloric families are built from extremal atoms: unit initial mass at a
//! point of the cylinder base, or a unit source at an exterior point switched
//! on at a grid time. Every nonnegative caloric function is a mixture of
//! atoms, and a ratio `sup/inf` of a mixture never exceeds the largest ratio
//! of its components, so per-atom maxima bound the whole family.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::DirichletForm;
use crate::linalg::{restrict, solve_spd, solve_spd_many, Spectral};
use crate::report::{CheckResult, ConditionReport, RatioTable, Verdict};
use crate::scales::ScaleTriple;
use crate::space::MetricMeasureSpace;

/// FULL mode is limited to spaces of this size.
pub const FULL_MAX_POINTS: usize = 256;
/// FULL mode is limited to this many exterior atoms.
pub const FULL_MAX_EXTERIOR: usize = 2000;

/// `Q = (t0, t0+φ(C4 R)) × B(x0, C5 R)` with windows `Q-` and `Q+` over `B(x0, R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderSpec {
    pub t0: f64,
    pub x0: usize,
    pub r: f64,
    pub c: [f64; 5],
}

pub const DEFAULT_HARNACK_CONSTANTS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Windows {
    pub minus: (f64, f64),
    pub plus: (f64, f64),
    pub top: f64,
}

impl CylinderSpec {
    pub fn new(x0: usize, r: f64) -> Self {
        CylinderSpec { t0: 0.0, x0, r, c: DEFAULT_HARNACK_CONSTANTS }
    }

    pub fn validate(&self, space: &MetricMeasureSpace) -> Result<()> {
        let c = self.c;
        if !(0.0 < c[0] && c[0] < c[1] && c[1] < c[2] && c[2] < c[3] && c[4] > 1.0) {
            return Err(Error::Domain("cylinder constants need 0 < C1 < C2 < C3 < C4 and C5 > 1".into()));
        }
        if !(self.r > 0.0) || self.t0 < 0.0 || self.x0 >= space.len() {
            return Err(Error::Domain("cylinder needs r > 0, t0 >= 0 and a valid centre".into()));
        }
        if !space.ball_is_interior(self.x0, c[4] * self.r) {
            return Err(Error::Domain(format!("B({}, {}) reaches the truncation boundary", self.x0, c[4] * self.r)));
        }
        Ok(())
    }

    /// Window times relative to `t0`.
    pub fn windows(&self, scales: &ScaleTriple) -> Windows {
        let phi = |k: usize| scales.phi().value(self.c[k] * self.r);
        Windows { minus: (phi(0), phi(1)), plus: (phi(2), phi(3)), top: phi(3) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// All extremal caloric functions of the cylinder.
    Full,
    /// Global heat kernels only; a necessary-condition check.
    Necessary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStepping {
    Exact,
    ImplicitEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiOptions {
    pub mode: PhiMode,
    pub stepping: TimeStepping,
    /// Time steps over `(t0, t0+φ(C4 R))`; at least 256.
    pub steps: usize,
    /// Atoms whose sup over `Q-` is below this fraction of the largest sup are skipped.
    pub noise_floor: f64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        PhiOptions { mode: PhiMode::Necessary, stepping: TimeStepping::Exact, steps: 256, noise_floor: 1e-12 }
    }
}

/// Solves for `u` harmonic in `ball` with `u = exterior` off the ball.
pub fn harmonic_solve(form: &DirichletForm, ball: &[usize], exterior: &DVector<f64>) -> Result<DVector<f64>> {
    let n = form.len();
    if exterior.len() != n || exterior.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("exterior data must be finite and cover the space".into()));
    }
    let inside = membership(n, ball);
    let k = form.energy_matrix();
    let kbb = restrict(k, ball);
    let rhs = DVector::from_iterator(
        ball.len(),
        ball.iter().map(|&x| -(0..n).filter(|&y| !inside[y]).map(|y| k[(x, y)] * exterior[y]).sum::<f64>()),
    );
    let ub = solve_spd(&kbb, &rhs)?;
    let mut u = exterior.clone();
    for (i, &x) in ball.iter().enumerate() {
        u[x] = ub[i];
    }
    Ok(u)
}

/// `max_{x ∈ ball} |(K u)(x)| / μ(x)`, scaled by `max |u|`.
pub fn harmonic_residual(form: &DirichletForm, ball: &[usize], u: &DVector<f64>) -> f64 {
    let ku = form.energy_matrix() * u;
    let scale = u.amax().max(f64::MIN_POSITIVE);
    ball.iter().map(|&x| (ku[x] / form.space().mu()[x]).abs()).fold(0.0, f64::max) / scale
}

fn membership(n: usize, set: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &x in set {
        m[x] = true;
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "point")]
pub enum Atom {
    Constant,
    /// Unit initial mass at a point of the cylinder base.
    Bottom(usize),
    /// Unit source at an exterior point.
    Exterior(usize),
    /// Global heat kernel with pole at a point.
    Global(usize),
}

/// Heat semigroup of a domain applied to a block of initial vectors, observed on rows.
struct Propagator {
    domain: Vec<usize>,
    rows: Vec<usize>,
    atoms: Vec<Atom>,
    exact: Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)>,
    euler: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Propagator {
    fn new(
        form: &DirichletForm,
        domain: Vec<usize>,
        rows: Vec<usize>,
        atoms: Vec<Atom>,
        init: DMatrix<f64>,
        stepping: TimeStepping,
        dt: f64,
    ) -> Result<Self> {
        let mu: Vec<f64> = domain.iter().map(|&x| form.space().mu()[x]).collect();
        let local: Vec<usize> = rows.iter().map(|r| domain.iter().position(|d| d == r).expect("row in domain")).collect();
        let exact = match stepping {
            TimeStepping::Exact => {
                let sp = if domain.len() == form.len() { form.spectral()?.clone() } else { form.dirichlet_spectral(&domain)? };
                Some(spectral_parts(&sp, &mu, &local, &init))
            }
            TimeStepping::ImplicitEuler => None,
        };
        let euler = match stepping {
            TimeStepping::ImplicitEuler => {
                let k = restrict(form.energy_matrix(), &domain);
                let m = DMatrix::from_diagonal(&DVector::from_vec(mu.clone()));
                let a = &m + &k * dt;
                let step = solve_spd_many(&a, &m)?;
                Some((step, init))
            }
            TimeStepping::Exact => None,
        };
        Ok(Propagator { domain, rows: local, atoms, exact, euler })
    }

    /// Fields on the observation rows at times `k·dt` for `k = 0..=steps`.
    fn fields(&self, dt: f64, steps: usize) -> Vec<DMatrix<f64>> {
        if let Some((a, lam, b)) = &self.exact {
            (0..=steps).into_par_iter().map(|k| apply(a, lam, b, |l| (-l * k as f64 * dt).exp())).collect()
        } else {
            let (step, init) = self.euler.as_ref().unwrap();
            let mut out = Vec::with_capacity(steps + 1);
            let mut u = init.clone();
            for k in 0..=steps {
                if k > 0 {
                    u = step * &u;
                }
                out.push(DMatrix::from_fn(self.rows.len(), u.ncols(), |r, c| u[(self.rows[r], c)]));
            }
            out
        }
    }
}

/// `(A, λ, B)` with `e^{τL} init` on rows equal to `A diag(f(λ)) B`.
fn spectral_parts(sp: &Spectral, mu: &[f64], rows: &[usize], init: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = sp.len();
    let a = DMatrix::from_fn(rows.len(), n, |r, k| sp.inv_sqrt_mu[rows[r]] * sp.vectors[(rows[r], k)]);
    let scaled = DMatrix::from_fn(n, init.ncols(), |z, c| mu[z].sqrt() * init[(z, c)]);
    let b = sp.vectors.transpose() * scaled;
    (a, sp.values.map(|l| l.max(0.0)), b)
}

fn apply(a: &DMatrix<f64>, lam: &DVector<f64>, b: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mut fb = b.clone();
    for k in 0..lam.len() {
        let s = f(lam[k]);
        fb.row_mut(k).scale_mut(s);
    }
    a * fb
}

/// Atoms and initial vectors for a cylinder.
fn cylinder_atoms(form: &DirichletForm, cyl: &CylinderSpec, mode: PhiMode) -> Result<(Vec<usize>, Vec<Atom>, DMatrix<f64>)> {
    let space = form.space();
    let n = space.len();
    let mu = space.mu();
    match mode {
        PhiMode::Necessary => {
            let domain: Vec<usize> = (0..n).collect();
            let init = DMatrix::from_fn(n, n, |z, c| if z == c { 1.0 / mu[z] } else { 0.0 });
            Ok((domain, (0..n).map(Atom::Global).collect(), init))
        }
        PhiMode::Full => {
            if n > FULL_MAX_POINTS {
                return Err(Error::Domain(format!("FULL mode needs n <= {FULL_MAX_POINTS}")));
            }
            let domain = space.ball(cyl.x0, cyl.c[4] * cyl.r);
            let inside = membership(n, &domain);
            let k = form.energy_matrix();
            let ext: Vec<usize> = (0..n).filter(|&y| !inside[y] && domain.iter().any(|&z| k[(z, y)] != 0.0)).collect();
            if ext.len() > FULL_MAX_EXTERIOR {
                return Err(Error::Domain(format!("FULL mode needs at most {FULL_MAX_EXTERIOR} exterior atoms")));
            }
            let m = domain.len();
            let mut init = DMatrix::zeros(m, m + ext.len());
            let mut atoms = Vec::with_capacity(m + ext.len());
            for (i, &z) in domain.iter().enumerate() {
                init[(i, i)] = 1.0 / mu[z];
                atoms.push(Atom::Bottom(z));
            }
            for (j, &y) in ext.iter().enumerate() {
                for (i, &z) in domain.iter().enumerate() {
                    init[(i, m + j)] = -k[(z, y)] / mu[z];
                }
                atoms.push(Atom::Exterior(y));
            }
            Ok((domain, atoms, init))
        }
    }
}

/// Values of every atom on `B(x0, R)` at times `t0 + k Δ`, `k = 0..=steps`.
pub struct CaloricFamily {
    pub domain: Vec<usize>,
    pub rows: Vec<usize>,
    pub atoms: Vec<Atom>,
    pub dt: f64,
    /// `fields[k][(row, atom)]` at lag `k` after the atom starts.
    pub fields: Vec<DMatrix<f64>>,
}

pub fn caloric_poisson(
    form: &DirichletForm,
    scales: &ScaleTriple,
    cyl: &CylinderSpec,
    mode: PhiMode,
    stepping: TimeStepping,
    steps: usize,
) -> Result<CaloricFamily> {
    cyl.validate(form.space())?;
    if steps < 256 {
        return Err(Error::Domain("time step must be at most φ(C4 R)/256".into()));
    }
    let w = cyl.windows(scales);
    let dt = w.top / steps as f64;
    let (domain, atoms, init) = cylinder_atoms(form, cyl, mode)?;
    let rows = form.space().ball(cyl.x0, cyl.r);
    let prop = Propagator::new(form, domain, rows.clone(), atoms, init, stepping, dt)?;
    let fields = prop.fields(dt, steps);
    Ok(CaloricFamily { domain: prop.domain, rows, atoms: prop.atoms, dt, fields })
}

/// Worst atom and the points realizing its ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderResult {
    pub cylinder: CylinderSpec,
    pub c6: f64,
    pub atom: Atom,
    /// Switch-on time of the worst atom, relative to `t0`.
    pub start: f64,
    /// `(t, x)` of the sup over `Q-` and of the inf over `Q+`.
    pub p: (f64, usize),
    pub q: (f64, usize),
    pub atoms_checked: usize,
    pub atoms_skipped: usize,
    /// Worst caloric function on `B(x0,R)`, one row per time step.
    pub worst_field: Vec<Vec<f64>>,
}

fn lag_range(lo: f64, hi: f64, dt: f64) -> (usize, usize) {
    let a = (lo / dt - 1e-9).ceil().max(0.0) as usize;
    let b = (hi / dt + 1e-9).floor() as usize;
    (a, b)
}

/// Fitted `C6` for one cylinder from a caloric family.
pub fn cylinder_ratio(fam: &CaloricFamily, cyl: &CylinderSpec, w: &Windows, noise_floor: f64) -> CylinderResult {
    let (m_lo, m_hi) = lag_range(w.minus.0, w.minus.1, fam.dt);
    let (p_lo, p_hi) = lag_range(w.plus.0, w.plus.1, fam.dt);
    let steps = fam.fields.len() - 1;
    let p_hi = p_hi.min(steps);
    let na = fam.atoms.len();
    // Per lag and atom: (max, argmax row, min, argmin row).
    let ext: Vec<Vec<(f64, usize, f64, usize)>> = fam
        .fields
        .par_iter()
        .map(|f| {
            (0..na)
                .map(|a| {
                    let col = f.column(a);
                    let (mut mx, mut ix, mut mn, mut jn) = (f64::NEG_INFINITY, 0, f64::INFINITY, 0);
                    for (r, &v) in col.iter().enumerate() {
                        if v > mx {
                            mx = v;
                            ix = r;
                        }
                        if v < mn {
                            mn = v;
                            jn = r;
                        }
                    }
                    (mx, ix, mn, jn)
                })
                .collect()
        })
        .collect();
    struct Cand {
        sup: f64,
        inf: f64,
        atom: usize,
        start: usize,
        p: (usize, usize),
        q: (usize, usize),
    }
    let mut cands = Vec::new();
    for a in 0..na {
        let starts = match fam.atoms[a] {
            Atom::Exterior(_) => m_hi,
            _ => 1,
        };
        for s in 0..starts {
            let min_lag = if matches!(fam.atoms[a], Atom::Exterior(_)) { 1 } else { 0 };
            let mut sup = (f64::NEG_INFINITY, 0, 0);
            for t in m_lo.max(s + min_lag)..=m_hi {
                let e = ext[t - s][a];
                if e.0 > sup.0 {
                    sup = (e.0, t, e.1);
                }
            }
            if sup.0 == f64::NEG_INFINITY {
                continue;
            }
            let mut inf = (f64::INFINITY, 0, 0);
            for t in p_lo..=p_hi {
                let e = ext[t - s][a];
                if e.2 < inf.0 {
                    inf = (e.2, t, e.3);
                }
            }
            cands.push(Cand { sup: sup.0, inf: inf.0, atom: a, start: s, p: (sup.1, sup.2), q: (inf.1, inf.2) });
        }
    }
    let top_sup = cands.iter().map(|c| c.sup).fold(0.0, f64::max);
    let floor = noise_floor * top_sup;
    let mut best: Option<(f64, &Cand)> = None;
    let mut checked = 0;
    for c in &cands {
        if c.sup <= floor {
            continue;
        }
        checked += 1;
        let ratio = if c.inf > 1e-300 { c.sup / c.inf } else { f64::INFINITY };
        if best.as_ref().is_none_or(|b| ratio > b.0) {
            best = Some((ratio, c));
        }
    }
    let skipped = cands.len() - checked;
    match best {
        Some((ratio, c)) if ratio > 1.0 => {
            let worst_field = (0..=steps)
                .map(|t| if t < c.start { vec![0.0; fam.rows.len()] } else { fam.fields[t - c.start].column(c.atom).iter().cloned().collect() })
                .collect();
            CylinderResult {
                cylinder: cyl.clone(),
                c6: ratio,
                atom: fam.atoms[c.atom],
                start: c.start as f64 * fam.dt,
                p: (c.p.0 as f64 * fam.dt, fam.rows[c.p.1]),
                q: (c.q.0 as f64 * fam.dt, fam.rows[c.q.1]),
                atoms_checked: checked,
                atoms_skipped: skipped,
                worst_field,
            }
        }
        // The constant function has ratio 1.
        _ => CylinderResult {
            cylinder: cyl.clone(),
            c6: 1.0,
            atom: Atom::Constant,
            start: 0.0,
            p: (w.minus.0, cyl.x0),
            q: (w.plus.0, cyl.x0),
            atoms_checked: checked,
            atoms_skipped: skipped,
            worst_field: vec![vec![1.0; fam.rows.len()]; steps + 1],
        },
    }
}

pub fn check_phi(
    form: &DirichletForm,
    scales: &ScaleTriple,
    cylinders: &[CylinderSpec],
    opts: &PhiOptions,
) -> Result<(Vec<CylinderResult>, CheckResult)> {
    let mut results = Vec::new();
    let mut table = RatioTable::new(&["x0", "R", "C6", "atoms_checked"]);
    for cyl in cylinders {
        let fam = caloric_poisson(form, scales, cyl, opts.mode, opts.stepping, opts.steps)?;
        let res = cylinder_ratio(&fam, cyl, &cyl.windows(scales), opts.noise_floor);
        table.push(vec![cyl.x0 as f64, cyl.r, res.c6, res.atoms_checked as f64]);
        results.push(res);
    }
    if results.is_empty() {
        return Ok((results, CheckResult::new(ConditionReport::new("PHI", Verdict::Skipped).note("no cylinder"), table)));
    }
    let worst = results.iter().max_by(|a, b| a.c6.total_cmp(&b.c6)).unwrap();
    let c6 = worst.c6;
    let c = results[0].cylinder.c;
    let mut report = ConditionReport::new("PHI", if c6.is_finite() { Verdict::Certified } else { Verdict::Failed })
        .constant("C1", c[0])
        .constant("C2", c[1])
        .constant("C3", c[2])
        .constant("C4", c[3])
        .constant("C5", c[4])
        .constant("C6", c6)
        .witness("x0", worst.cylinder.x0)
        .witness("R", worst.cylinder.r)
        .witness("sup_t", worst.p.0)
        .witness("sup_x", worst.p.1)
        .witness("inf_t", worst.q.0)
        .witness("inf_x", worst.q.1)
        .range("R", cylinders.iter().map(|c| c.r).fold(f64::INFINITY, f64::min), cylinders.iter().map(|c| c.r).fold(0.0, f64::max));
    for r in &results {
        report = report.constant(&format!("C6_x{}_R{}", r.cylinder.x0, r.cylinder.r), r.c6);
    }
    report = match opts.mode {
        PhiMode::Full => report.note("all extremal caloric functions of each cylinder"),
        PhiMode::Necessary => report.note("necessary-condition check: global heat kernels only"),
    };
    Ok((results, CheckResult::new(report, table)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityOptions {
    pub epsilon: f64,
    pub theta_grid: Vec<f64>,
    /// Largest admissible `c`; defaults to `2/(1-ε)`.
    pub cap: Option<f64>,
    pub time_samples: usize,
    pub switch_times: usize,
    pub include_parabolic: bool,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        RegularityOptions {
            epsilon: 0.5,
            theta_grid: vec![1.0, 0.5, 0.25, 0.125],
            cap: None,
            time_samples: 8,
            switch_times: 16,
            include_parabolic: true,
        }
    }
}

impl RegularityOptions {
    fn cap(&self) -> f64 {
        self.cap.unwrap_or(2.0 / (1.0 - self.epsilon))
    }
}

/// Smallest `c(θ)` per grid `θ` over a set of sampled values
/// `(normalized value per member, time, point)`.
fn holder_constants(
    space: &MetricMeasureSpace,
    scales: &ScaleTriple,
    r: f64,
    values: &DMatrix<f64>,
    samples: &[(f64, usize)],
    thetas: &[f64],
) -> Vec<f64> {
    let ns = samples.len();
    let mut scale = Vec::with_capacity(ns * ns);
    for a in 0..ns {
        for b in 0..ns {
            let (ta, xa) = samples[a];
            let (tb, xb) = samples[b];
            let dt = (ta - tb).abs();
            let s = if dt > 0.0 { scales.phi().inverse(dt) } else { 0.0 } + space.d(xa, xb);
            scale.push(s / r);
        }
    }
    let per_member: Vec<Vec<f64>> = (0..values.ncols())
        .into_par_iter()
        .map(|m| {
            let col = values.column(m);
            let mut c = vec![0.0f64; thetas.len()];
            for a in 0..ns {
                for b in (a + 1)..ns {
                    let s = scale[a * ns + b];
                    if s <= 0.0 {
                        continue;
                    }
                    let diff = (col[a] - col[b]).abs();
                    for (i, &th) in thetas.iter().enumerate() {
                        c[i] = c[i].max(diff / s.powf(th));
                    }
                }
            }
            c
        })
        .collect();
    (0..thetas.len()).map(|i| per_member.iter().map(|c| c[i]).fold(0.0, f64::max)).collect()
}

/// Harmonic family of `B(x0, r)`: harmonic measures of coupled exterior points
/// and a clipped coordinate, each normalized by its sup over the space.
fn harmonic_family(form: &DirichletForm, x0: usize, r: f64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let space = form.space();
    let n = space.len();
    let ball = space.ball(x0, r);
    let inside = membership(n, &ball);
    let k = form.energy_matrix();
    let ext: Vec<usize> = (0..n).filter(|&y| !inside[y] && ball.iter().any(|&z| k[(z, y)] != 0.0)).collect();
    let kbb = restrict(k, &ball);
    let rhs = DMatrix::from_fn(ball.len(), ext.len() + 1, |i, j| {
        let z = ball[i];
        if j < ext.len() {
            -k[(z, ext[j])]
        } else {
            -(0..n).filter(|&y| !inside[y]).map(|y| k[(z, y)] * clipped_coordinate(space, x0, y, r)).sum::<f64>()
        }
    });
    let u = solve_spd_many(&kbb, &rhs)?;
    // Harmonic measure has exterior sup 1; the clipped coordinate has exterior sup ≤ 2r.
    let mut full = DMatrix::zeros(n, ext.len() + 1);
    for j in 0..=ext.len() {
        for y in 0..n {
            full[(y, j)] = if inside[y] {
                u[(ball.iter().position(|&b| b == y).unwrap(), j)]
            } else if j < ext.len() {
                if y == ext[j] { 1.0 } else { 0.0 }
            } else {
                clipped_coordinate(space, x0, y, r)
            };
        }
        let s = full.column(j).amax();
        if s > 0.0 {
            full.column_mut(j).unscale_mut(s);
        }
    }
    Ok((full, ball))
}

/// Signed first coordinate relative to `x0`, clipped to `[-2r, 2r]`; distance on spaces without coordinates.
fn clipped_coordinate(space: &MetricMeasureSpace, x0: usize, y: usize, r: f64) -> f64 {
    let (cx, cy) = (space.coords(x0), space.coords(y));
    let v = if !cx.is_empty() && !cy.is_empty() { cy[0] - cx[0] } else { space.d(x0, y) };
    v.clamp(-2.0 * r, 2.0 * r)
}

/// PHR and EHR with fitted `(θ, c)`; `θ` is the largest grid value with `c(θ) ≤ cap`.
pub fn check_regularity(
    form: &DirichletForm,
    scales: &ScaleTriple,
    centers: &[usize],
    radii: &[f64],
    opts: &RegularityOptions,
) -> Result<(CheckResult, CheckResult)> {
    let space = form.space();
    let eps = opts.epsilon;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain("epsilon must lie in (0, 1)".into()));
    }
    let mut thetas = opts.theta_grid.clone();
    thetas.sort_by(|a, b| b.total_cmp(a));
    let cap = opts.cap();
    let mut ehr_table = RatioTable::new(&["x0", "r", "theta", "c"]);
    let mut phr_table = RatioTable::new(&["x0", "r", "theta", "c"]);
    let mut ehr_c = vec![0.0f64; thetas.len()];
    let mut phr_c = vec![0.0f64; thetas.len()];
    let mut used = 0;
    for &x0 in centers {
        for &r in radii {
            if !space.ball_is_interior(x0, r) {
                continue;
            }
            used += 1;
            let (fam, _) = harmonic_family(form, x0, r)?;
            let inner = space.ball(x0, eps * r);
            let samples: Vec<(f64, usize)> = inner.iter().map(|&x| (0.0, x)).collect();
            let vals = DMatrix::from_fn(inner.len(), fam.ncols(), |i, j| fam[(inner[i], j)]);
            let c = holder_constants(space, scales, r, &vals, &samples, &thetas);
            for (i, &th) in thetas.iter().enumerate() {
                ehr_table.push(vec![x0 as f64, r, th, c[i]]);
                ehr_c[i] = ehr_c[i].max(c[i]);
            }
            if opts.include_parabolic {
                let c = parabolic_constants(form, scales, x0, r, eps, opts, &thetas)?;
                for (i, &th) in thetas.iter().enumerate() {
                    phr_table.push(vec![x0 as f64, r, th, c[i]]);
                    phr_c[i] = phr_c[i].max(c[i]);
                }
            }
        }
    }
    let build = |name: &str, c: &[f64], table: RatioTable, active: bool| {
        if used == 0 || !active {
            return CheckResult::new(ConditionReport::new(name, Verdict::Skipped), table);
        }
        let pick = thetas.iter().zip(c).find(|(_, &ci)| ci <= cap);
        let mut rep = match pick {
            Some((&th, &ci)) => ConditionReport::new(name, Verdict::Certified).constant("theta", th).constant("c", ci),
            None => ConditionReport::new(name, Verdict::Failed).constant("theta", f64::NAN).constant("c", f64::INFINITY),
        };
        rep = rep.constant("epsilon", eps).constant("cap", cap);
        for (th, ci) in thetas.iter().zip(c) {
            rep = rep.constant(&format!("c_theta{th}"), *ci);
        }
        CheckResult::new(rep, table)
    };
    let phr = build("PHR", &phr_c, phr_table, opts.include_parabolic);
    let ehr = build("EHR", &ehr_c, ehr_table, true);
    Ok((phr, ehr))
}

/// Hölder constants of bounded caloric atoms on `(0, φ(r)) × B(x0, r)`.
fn parabolic_constants(
    form: &DirichletForm,
    scales: &ScaleTriple,
    x0: usize,
    r: f64,
    eps: f64,
    opts: &RegularityOptions,
    thetas: &[f64],
) -> Result<Vec<f64>> {
    let space = form.space();
    let n = space.len();
    let top = scales.phi().value(r);
    let window = scales.phi().value(eps * r);
    let domain = space.ball(x0, r);
    let inside = membership(n, &domain);
    let k = form.energy_matrix();
    let ext: Vec<usize> = (0..n).filter(|&y| !inside[y] && domain.iter().any(|&z| k[(z, y)] != 0.0)).collect();
    let inner = space.ball(x0, eps * r);
    let rows: Vec<usize> = inner.iter().map(|x| domain.iter().position(|d| d == x).unwrap()).collect();
    let mu: Vec<f64> = domain.iter().map(|&x| space.mu()[x]).collect();
    let sp = form.dirichlet_spectral(&domain)?;
    let m = domain.len();
    // Bottom atoms: unit value at z. Exterior atoms: unit value at y from a switch time on.
    let mut init = DMatrix::zeros(m, m + ext.len());
    for i in 0..m {
        init[(i, i)] = 1.0;
    }
    for (j, &y) in ext.iter().enumerate() {
        for (i, &z) in domain.iter().enumerate() {
            init[(i, m + j)] = -k[(z, y)] / mu[i];
        }
    }
    let (a, lam, b) = spectral_parts(&sp, &mu, &rows, &init);
    let ts: Vec<f64> = (0..opts.time_samples).map(|i| top - window * (i as f64 + 0.5) / opts.time_samples as f64).collect();
    let switches: Vec<f64> = (0..opts.switch_times).map(|j| top * j as f64 / opts.switch_times as f64).collect();
    let samples: Vec<(f64, usize)> = ts.iter().flat_map(|&t| inner.iter().map(move |&x| (t, x))).collect();
    let members = m + ext.len() * switches.len();
    let mut vals = DMatrix::zeros(samples.len(), members);
    for (ti, &t) in ts.iter().enumerate() {
        let bottom = apply(&a, &lam, &b.columns(0, m).into_owned(), |l| (-l * t).exp());
        for i in 0..inner.len() {
            for c in 0..m {
                vals[(ti * inner.len() + i, c)] = bottom[(i, c)];
            }
        }
        for (si, &s) in switches.iter().enumerate() {
            let tau = (t - s).max(0.0);
            let f = |l: f64| if l * tau > 1e-12 { (1.0 - (-l * tau).exp()) / l } else { tau };
            let e = apply(&a, &lam, &b.columns(m, ext.len()).into_owned(), f);
            for i in 0..inner.len() {
                for c in 0..ext.len() {
                    vals[(ti * inner.len() + i, m + si * ext.len() + c)] = e[(i, c)];
                }
            }
        }
    }
    // Data are bounded by 1; interior values by the maximum principle.
    for j in 0..members {
        let s = vals.column(j).amax().max(1.0);
        vals.column_mut(j).unscale_mut(s);
    }
    Ok(holder_constants(space, scales, r, &vals, &samples, thetas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::JumpKernel;
    use std::sync::Arc;

    fn path(n: usize) -> DirichletForm {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let s = Arc::new(MetricMeasureSpace::from_graph(n, &edges, vec![1.0; n]).unwrap());
        DirichletForm::assemble(s, 1.0, JumpKernel::none(n)).unwrap()
    }

    #[test]
    fn harmonic_linear_on_path() {
        let f = path(16);
        let ball = f.space().ball(8, 4.0);
        let ext = DVector::from_fn(16, |i, _| 3.0 * i as f64 - 5.0);
        let u = harmonic_solve(&f, &ball, &ext).unwrap();
        for &x in &ball {
            assert!((u[x] - (3.0 * x as f64 - 5.0)).abs() < 1e-10);
        }
        assert!(harmonic_residual(&f, &ball, &u) < 1e-10);
    }

    #[test]
    fn harmonic_constant_data() {
        let f = path(12);
        let ball = f.space().ball(6, 3.0);
        let u = harmonic_solve(&f, &ball, &DVector::from_element(12, 2.5)).unwrap();
        assert!(u.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn refuses_coarse_steps() {
        let f = path(16);
        let sc = ScaleTriple::powers(2.0, 2.0).unwrap();
        let cyl = CylinderSpec::new(8, 1.5);
        assert!(caloric_poisson(&f, &sc, &cyl, PhiMode::Full, TimeStepping::Exact, 100).is_err());
    }

    #[test]
    fn euler_close_to_exact() {
        let f = path(16);
        let sc = ScaleTriple::powers(2.0, 2.0).unwrap();
        let cyl = CylinderSpec::new(8, 1.5);
        let a = caloric_poisson(&f, &sc, &cyl, PhiMode::Full, TimeStepping::Exact, 1024).unwrap();
        let b = caloric_poisson(&f, &sc, &cyl, PhiMode::Full, TimeStepping::ImplicitEuler, 1024).unwrap();
        let w = cyl.windows(&sc);
        let ca = cylinder_ratio(&a, &cyl, &w, 1e-12).c6;
        let cb = cylinder_ratio(&b, &cyl, &w, 1e-12).c6;
        assert!((ca - cb).abs() / ca < 0.1, "{ca} {cb}");
    }
}
