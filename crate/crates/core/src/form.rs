//! Jump-diffusion Dirichlet forms on finite spaces: assembly, heat kernels,
//! truncation, subordination, exit times and energy measures.
//!
//! Conventions: `E(f,f) = Σ_{edges} w (f(x)-f(y))² + Σ_{x≠y} (f(x)-f(y))² J(x,y) μ(x) μ(y)`,
//! edges counted once, ordered pairs for the jump part. The energy matrix `K` satisfies
//! `E(f,g) = fᵀ K g` and the generator is `L = -M⁻¹ K`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Spectral};
use crate::scales::ScaleTriple;
use crate::space::{MetricMeasureSpace, SpaceKind, DEFAULT_SEED};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    None,
    StableLike,
    TwoRegime,
    Custom,
    Subordinate,
}

/// Jump builder parameters. Intensities are `c(x,y) / (d^v ψ(d))` where `v` is the
/// nominal volume exponent of the space and `ψ(d) = d^alpha`, switching to
/// `d^beta` (continuously) beyond `regime_break` for the two-regime kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpSpec {
    pub kind: JumpKind,
    pub alpha: f64,
    pub beta: f64,
    pub cmin: f64,
    pub cmax: f64,
    pub regime_break: f64,
    /// Subordinator drift `b`.
    pub drift: f64,
    /// Subordinator index `γ`.
    pub gamma: f64,
}

impl Default for JumpSpec {
    fn default() -> Self {
        JumpSpec {
            kind: JumpKind::None,
            alpha: 1.0,
            beta: 1.0,
            cmin: 1.0,
            cmax: 1.0,
            regime_break: 1.0,
            drift: 1.0,
            gamma: 0.5,
        }
    }
}

/// Symmetric jump intensities with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpKernel {
    kind: JumpKind,
    entries: DMatrix<f64>,
    /// `(c1, c2)` with `c1/(d^v ψ(d)) ≤ J ≤ c2/(d^v ψ(d))` for the parametric builders.
    bounds: Option<(f64, f64)>,
}

impl JumpKernel {
    pub fn none(n: usize) -> Self {
        JumpKernel { kind: JumpKind::None, entries: DMatrix::zeros(n, n), bounds: None }
    }

    pub fn custom(entries: DMatrix<f64>) -> Result<Self> {
        Self::validated(JumpKind::Custom, entries, None)
    }

    fn validated(kind: JumpKind, mut entries: DMatrix<f64>, bounds: Option<(f64, f64)>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::Construction("jump kernel must be square".into()));
        }
        let mut worst = (0.0, 0, 0);
        for x in 0..n {
            entries[(x, x)] = 0.0;
            for y in 0..x {
                let (a, b) = (entries[(x, y)], entries[(y, x)]);
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::Construction(format!("jump intensity at ({x},{y}) must be finite and nonnegative")));
                }
                let gap = (a - b).abs() / a.max(b).max(f64::MIN_POSITIVE);
                if gap > worst.0 {
                    worst = (gap, x, y);
                }
            }
        }
        if worst.0 > 1e-12 {
            return Err(Error::Construction(format!(
                "jump kernel is not symmetric: relative gap {:.3e} at ({}, {})",
                worst.0, worst.1, worst.2
            )));
        }
        Ok(JumpKernel { kind, entries, bounds })
    }

    pub fn build(space: &MetricMeasureSpace, spec: &JumpSpec) -> Result<Self> {
        let n = space.len();
        let v = space.volume_dim();
        match spec.kind {
            JumpKind::None => Ok(Self::none(n)),
            JumpKind::Custom => Err(Error::Construction("custom jump kernels are given entrywise".into())),
            JumpKind::Subordinate => Err(Error::Construction(
                "subordinate jump kernels come from a base form".into(),
            )),
            JumpKind::StableLike | JumpKind::TwoRegime => {
                if !(spec.alpha > 0.0 && spec.cmin > 0.0 && spec.cmax >= spec.cmin) {
                    return Err(Error::Construction("jump builder needs alpha > 0 and 0 < cmin <= cmax".into()));
                }
                let two = spec.kind == JumpKind::TwoRegime;
                if two && !(spec.beta > 0.0 && spec.regime_break > 0.0) {
                    return Err(Error::Construction("two-regime kernel needs beta > 0 and regime_break > 0".into()));
                }
                let profile = |d: f64| {
                    if two && d > spec.regime_break {
                        spec.regime_break.powf(spec.beta - spec.alpha) * d.powf(-v - spec.beta)
                    } else {
                        d.powf(-v - spec.alpha)
                    }
                };
                let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
                let mut entries = DMatrix::zeros(n, n);
                for x in 0..n {
                    for y in 0..x {
                        let d = space.d(x, y);
                        if !d.is_finite() {
                            continue;
                        }
                        let c = if spec.cmax > spec.cmin { rng.gen_range(spec.cmin..=spec.cmax) } else { spec.cmin };
                        let j = c * profile(d);
                        entries[(x, y)] = j;
                        entries[(y, x)] = j;
                    }
                }
                Self::validated(spec.kind, entries, Some((spec.cmin, spec.cmax)))
            }
        }
    }

    pub fn kind(&self) -> JumpKind {
        self.kind
    }
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    /// Kernel with all jumps longer than `rho` removed.
    pub fn truncated(&self, space: &MetricMeasureSpace, rho: f64) -> Self {
        let n = self.len();
        let entries = DMatrix::from_fn(n, n, |x, y| if space.d(x, y) > rho { 0.0 } else { self.entries[(x, y)] });
        JumpKernel { kind: self.kind, entries, bounds: self.bounds }
    }
}

/// Default nearest-neighbour conductance so that lattices approximate the
/// continuum Laplacian: `h^(dim-2)` on lattices, 1 elsewhere.
pub fn default_conductance(space: &MetricMeasureSpace) -> f64 {
    match space.kind() {
        SpaceKind::LatticeBox | SpaceKind::HalfspaceLattice => space.spacing().powi(space.dim() as i32 - 2),
        _ => 1.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatMethod {
    Spectral,
    ExpAction,
}

#[derive(Clone, Debug)]
pub struct DirichletForm {
    space: Arc<MetricMeasureSpace>,
    edges: Vec<(usize, usize, f64)>,
    jump: JumpKernel,
    k: DMatrix<f64>,
    spectral: OnceLock<std::result::Result<Spectral, Error>>,
}

impl DirichletForm {
    /// Nearest-neighbour conductances `local_scale * default_conductance` plus jumps.
    pub fn assemble(space: Arc<MetricMeasureSpace>, local_scale: f64, jump: JumpKernel) -> Result<Self> {
        if !(local_scale >= 0.0) {
            return Err(Error::Construction("local conductance must be nonnegative".into()));
        }
        let w = local_scale * default_conductance(&space);
        let mut edges = Vec::new();
        if w > 0.0 {
            for x in 0..space.len() {
                for &y in space.neighbors(x) {
                    if x < y {
                        edges.push((x, y, w));
                    }
                }
            }
        }
        Self::with_edges(space, edges, jump)
    }

    pub fn with_edges(space: Arc<MetricMeasureSpace>, edges: Vec<(usize, usize, f64)>, jump: JumpKernel) -> Result<Self> {
        let n = space.len();
        if jump.len() != n {
            return Err(Error::Construction("jump kernel size differs from the space".into()));
        }
        let mu = space.mu();
        let mut k = DMatrix::zeros(n, n);
        for &(x, y, w) in &edges {
            if x >= n || y >= n || x == y || !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Construction(format!("invalid conductance on edge ({x},{y})")));
            }
            k[(x, x)] += w;
            k[(y, y)] += w;
            k[(x, y)] -= w;
            k[(y, x)] -= w;
        }
        for x in 0..n {
            for y in 0..n {
                let j = jump.entries[(x, y)];
                if j > 0.0 {
                    let c = 2.0 * j * mu[x] * mu[y];
                    k[(x, y)] -= c;
                    k[(x, x)] += c;
                }
            }
        }
        linalg::symmetrize_in_place(&mut k);
        Ok(DirichletForm { space, edges, jump, k, spectral: OnceLock::new() })
    }

    pub fn space(&self) -> &MetricMeasureSpace {
        &self.space
    }
    pub fn space_arc(&self) -> Arc<MetricMeasureSpace> {
        self.space.clone()
    }
    pub fn jump(&self) -> &JumpKernel {
        &self.jump
    }
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }
    /// Energy matrix `K` with `E(f,g) = fᵀ K g`.
    pub fn energy_matrix(&self) -> &DMatrix<f64> {
        &self.k
    }
    pub fn len(&self) -> usize {
        self.space.len()
    }
    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn energy(&self, f: &DVector<f64>) -> f64 {
        f.dot(&(&self.k * f))
    }

    pub fn energy_bilinear(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        f.dot(&(&self.k * g))
    }

    /// `L = -M⁻¹ K`; off-diagonal entries are jump rates.
    pub fn generator(&self) -> DMatrix<f64> {
        let mu = self.space.mu();
        DMatrix::from_fn(self.len(), self.len(), |r, c| -self.k[(r, c)] / mu[r])
    }

    pub fn spectral(&self) -> Result<&Spectral> {
        self.spectral
            .get_or_init(|| Spectral::new(&self.k, self.space.mu()))
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Spectral data of the form killed outside `domain`.
    pub fn dirichlet_spectral(&self, domain: &[usize]) -> Result<Spectral> {
        if domain.is_empty() {
            return Err(Error::Domain("Dirichlet domain is empty".into()));
        }
        let mu: Vec<f64> = domain.iter().map(|&x| self.space.mu()[x]).collect();
        Spectral::new(&linalg::restrict(&self.k, domain), &mu)
    }

    /// Heat kernels on `times`, globally or killed outside `domain`.
    pub fn heat_kernel(&self, times: &[f64], domain: Option<&[usize]>) -> Result<HeatKernelTable> {
        match self.heat_kernel_with(HeatMethod::Spectral, times, domain) {
            Err(Error::Numerical(_)) => self.heat_kernel_with(HeatMethod::ExpAction, times, domain),
            other => other,
        }
    }

    pub fn heat_kernel_with(&self, method: HeatMethod, times: &[f64], domain: Option<&[usize]>) -> Result<HeatKernelTable> {
        if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Domain(format!("heat kernel time {t} must be positive")));
        }
        let points: Vec<usize> = match domain {
            Some(d) => d.to_vec(),
            None => (0..self.len()).collect(),
        };
        if points.is_empty() {
            return Err(Error::Domain("heat kernel domain is empty".into()));
        }
        let mu: Vec<f64> = points.iter().map(|&x| self.space.mu()[x]).collect();
        let kernels: Vec<DMatrix<f64>> = match method {
            HeatMethod::Spectral => {
                let owned;
                let sp = match domain {
                    None => self.spectral()?,
                    Some(d) => {
                        owned = self.dirichlet_spectral(d)?;
                        &owned
                    }
                };
                times.par_iter().map(|&t| sp.heat(t)).collect()
            }
            HeatMethod::ExpAction => {
                let k = match domain {
                    None => self.k.clone(),
                    Some(d) => linalg::restrict(&self.k, d),
                };
                let inv = DVector::from_iterator(mu.len(), mu.iter().map(|m| 1.0 / m.sqrt()));
                let s = linalg::symmetrize(&k, &inv);
                times
                    .par_iter()
                    .map(|&t| {
                        let e = linalg::expm_neg(&(&s * t));
                        DMatrix::from_fn(mu.len(), mu.len(), |r, c| e[(r, c)] * inv[r] * inv[c])
                    })
                    .collect()
            }
        };
        let tolerance = match method {
            HeatMethod::Spectral => 1e-12,
            HeatMethod::ExpAction => 1e-10,
        };
        Ok(HeatKernelTable { times: times.to_vec(), points, mu, kernels, method, tolerance })
    }

    pub fn truncate(&self, rho: f64) -> Result<TruncatedForm> {
        if !(rho > 0.0) {
            return Err(Error::Domain("truncation radius must be positive".into()));
        }
        let jump = self.jump.truncated(&self.space, rho);
        let form = DirichletForm::with_edges(self.space.clone(), self.edges.clone(), jump)?;
        Ok(TruncatedForm { rho, form })
    }

    /// Smallest `c0` with `E(u,u) - E^(ρ)(u,u) ≤ c0 ‖u‖² / φ(ρ)` over `fns`.
    pub fn gap_check(&self, rho: f64, phi_rho: f64, fns: &[DVector<f64>]) -> Result<GapReport> {
        let tr = self.truncate(rho)?;
        let mu = self.space.mu();
        let mut best = GapReport { rho, c0: 0.0, witness: None };
        for (i, u) in fns.iter().enumerate() {
            let norm: f64 = u.iter().zip(mu).map(|(v, m)| v * v * m).sum();
            if norm <= 0.0 {
                continue;
            }
            let gap = (self.energy(u) - tr.form.energy(u)).max(0.0);
            let c = gap * phi_rho / norm;
            if c > best.c0 {
                best.c0 = c;
                best.witness = Some(i);
            }
        }
        Ok(best)
    }

    /// Fits the smallest `c1` with
    /// `p(t,x,y) ≤ q^(ρ)(t,x,y) + c1 t/(V(x,ρ) φj(ρ)) exp(c1 t/φ(ρ))`.
    pub fn meyer_check(&self, scales: &ScaleTriple, rho: f64, times: &[f64], xs: &[usize]) -> Result<MeyerReport> {
        let p = self.heat_kernel(times, None)?;
        let q = self.truncate(rho)?.form.heat_kernel(times, None)?;
        let phi_rho = scales.phi().value(rho);
        let phij_rho = scales.phi_j().value(rho);
        let mut report = MeyerReport { rho, c1: 0.0, witness: None };
        for (ti, &t) in times.iter().enumerate() {
            for &x in xs {
                let scale = t / (self.space.volume(x, rho) * phij_rho);
                for y in 0..self.len() {
                    let excess = p.kernels[ti][(x, y)] - q.kernels[ti][(x, y)];
                    if excess <= 1e-14 * p.kernels[ti][(x, y)].abs() {
                        continue;
                    }
                    let target = excess / scale;
                    let g = |c: f64| c * (c * t / phi_rho).exp();
                    let mut hi = target.max(1e-300);
                    while g(hi) < target {
                        hi *= 2.0;
                    }
                    let mut lo = 0.0;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if g(mid) >= target {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    if hi > report.c1 {
                        report.c1 = hi;
                        report.witness = Some((t, x, y));
                    }
                }
            }
        }
        Ok(report)
    }

    /// Bernstein-function subordination with `ψ(λ) = bλ + λ^γ`; `γ = 1` turns
    /// the whole base form into jumps.
    pub fn subordinate(&self, drift: f64, gamma: f64) -> Result<Subordinated> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Domain(format!("subordinator index {gamma} outside (0,1]")));
        }
        if !(drift >= 0.0 && drift.is_finite()) {
            return Err(Error::Domain("subordinator drift must be nonnegative".into()));
        }
        let sp = self.spectral()?.clone();
        let frac = sp.signed_kernel_of(|l| l.powf(gamma));
        let n = self.len();
        // Off-diagonals of the fractional kernel are -2 J under the ordered-pair convention.
        let mut jump = DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                0.0
            } else {
                drift * self.jump.entries[(x, y)] + (-0.5 * frac[(x, y)]).max(0.0)
            }
        });
        linalg::symmetrize_in_place(&mut jump);
        let jump = JumpKernel { kind: JumpKind::Subordinate, entries: jump, bounds: None };
        let edges = self.edges.iter().map(|&(x, y, w)| (x, y, drift * w)).filter(|e| e.2 > 0.0).collect();
        let form = DirichletForm::with_edges(self.space.clone(), edges, jump)?;
        Ok(Subordinated { base: sp, drift, gamma, form })
    }

    /// `E^x τ_B` for `x ∈ B`, from `K_BB u = μ_B`.
    pub fn mean_exit(&self, ball: &[usize]) -> Result<DVector<f64>> {
        if ball.is_empty() {
            return Err(Error::Domain("exit set is empty".into()));
        }
        let kb = linalg::restrict(&self.k, ball);
        let rhs = DVector::from_iterator(ball.len(), ball.iter().map(|&x| self.space.mu()[x]));
        linalg::solve_spd(&kb, &rhs)
    }

    pub fn exit_stats(&self, ball: &[usize], times: &[f64]) -> Result<ExitStats> {
        let mean = self.mean_exit(ball)?;
        let survival = if times.is_empty() {
            Vec::new()
        } else {
            let table = self.heat_kernel(times, Some(ball))?;
            (0..times.len()).map(|i| (0..ball.len()).map(|x| table.mass(i, x)).collect()).collect()
        };
        Ok(ExitStats { ball: ball.to_vec(), mean: mean.iter().cloned().collect(), times: times.to_vec(), survival })
    }

    /// Energy split into point-mass measures; `Σ gamma_c + Σ gamma_j = E(f,f)`.
    pub fn energy_and_champ(&self, f: &DVector<f64>, rho: Option<f64>) -> Champ {
        let g = self.champ_bilinear(f, f);
        let gamma_rho = rho.map(|r| {
            let mu = self.space.mu();
            let n = self.len();
            (0..n)
                .map(|x| {
                    g.gamma_c[x]
                        + mu[x]
                            * (0..n)
                                .filter(|&y| self.space.d(x, y) <= r)
                                .map(|y| (f[x] - f[y]).powi(2) * self.jump.entries[(x, y)] * mu[y])
                                .sum::<f64>()
                })
                .collect()
        });
        Champ { energy: self.energy(f), gamma_c: g.gamma_c, gamma_j: g.gamma_j, gamma_rho }
    }

    /// Bilinear energy measures `Γc(u,v)`, `Γj(u,v)` as point masses.
    pub fn champ_bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> Champ {
        let n = self.len();
        let mu = self.space.mu();
        let mut gamma_c = vec![0.0; n];
        for &(x, y, w) in &self.edges {
            let c = 0.5 * w * (u[x] - u[y]) * (v[x] - v[y]);
            gamma_c[x] += c;
            gamma_c[y] += c;
        }
        let gamma_j = (0..n)
            .map(|x| {
                mu[x] * (0..n)
                    .map(|y| (u[x] - u[y]) * (v[x] - v[y]) * self.jump.entries[(x, y)] * mu[y])
                    .sum::<f64>()
            })
            .collect();
        Champ { energy: self.energy_bilinear(u, v), gamma_c, gamma_j, gamma_rho: None }
    }
}

#[derive(Clone, Debug)]
pub struct TruncatedForm {
    pub rho: f64,
    pub form: DirichletForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rho: f64,
    pub c0: f64,
    /// Index of the worst test function.
    pub witness: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeyerReport {
    pub rho: f64,
    pub c1: f64,
    /// Worst `(t, x, y)`.
    pub witness: Option<(f64, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub ball: Vec<usize>,
    pub mean: Vec<f64>,
    pub times: Vec<f64>,
    /// `survival[i][k] = P^{ball[k]}(τ > times[i])`.
    pub survival: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Champ {
    pub energy: f64,
    pub gamma_c: Vec<f64>,
    pub gamma_j: Vec<f64>,
    pub gamma_rho: Option<Vec<f64>>,
}

impl Champ {
    pub fn total(&self) -> Vec<f64> {
        self.gamma_c.iter().zip(&self.gamma_j).map(|(a, b)| a + b).collect()
    }
}

/// A form subordinated by `ψ(λ) = bλ + λ^γ`.
#[derive(Clone, Debug)]
pub struct Subordinated {
    base: Spectral,
    pub drift: f64,
    pub gamma: f64,
    /// Local part `b·E^(c)`, jumps `b·J + J_γ`.
    pub form: DirichletForm,
}

impl Subordinated {
    pub fn psi(&self, l: f64) -> f64 {
        self.drift * l + l.powf(self.gamma)
    }

    /// `exp(-t ψ(-L))` by functional calculus on the base spectrum.
    pub fn heat_kernel(&self, times: &[f64]) -> Result<HeatKernelTable> {
        if let Some(t) = times.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::Domain(format!("heat kernel time {t} must be positive")));
        }
        let n = self.base.len();
        let mu: Vec<f64> = self.base.inv_sqrt_mu.iter().map(|v| 1.0 / (v * v)).collect();
        let kernels = times.par_iter().map(|&t| self.base.kernel_of(|l| (-t * self.psi(l)).exp())).collect();
        Ok(HeatKernelTable {
            times: times.to_vec(),
            points: (0..n).collect(),
            mu,
            kernels,
            method: HeatMethod::Spectral,
            tolerance: 1e-12,
        })
    }

    pub fn jump(&self) -> &JumpKernel {
        self.form.jump()
    }

    pub fn base(&self) -> &Spectral {
        &self.base
    }
}

/// Heat kernel densities `p(t,x,y)` on a point set, indexed locally.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatKernelTable {
    pub times: Vec<f64>,
    /// Global ids of the local indices.
    pub points: Vec<usize>,
    pub mu: Vec<f64>,
    pub kernels: Vec<DMatrix<f64>>,
    pub method: HeatMethod,
    pub tolerance: f64,
}

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    times: Vec<f64>,
    points: Vec<usize>,
    method: HeatMethod,
    tolerance: f64,
}

impl HeatKernelTable {
    pub fn p(&self, ti: usize, x: usize, y: usize) -> f64 {
        self.kernels[ti][(x, y)]
    }

    /// `Σ_y p(t,x,y) μ(y)`.
    pub fn mass(&self, ti: usize, x: usize) -> f64 {
        (0..self.points.len()).map(|y| self.kernels[ti][(x, y)] * self.mu[y]).sum()
    }

    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.points.iter().position(|&p| p == global)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,p\n");
        for (ti, t) in self.times.iter().enumerate() {
            for (a, &x) in self.points.iter().enumerate() {
                for (b, &y) in self.points.iter().enumerate() {
                    s.push_str(&format!("{t},{x},{y},{}\n", self.kernels[ti][(a, b)]));
                }
            }
        }
        s
    }

    /// Length-prefixed JSON header followed by row-major little-endian doubles.
    pub fn to_binary(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&BinaryHeader {
            times: self.times.clone(),
            points: self.points.clone(),
            method: self.method,
            tolerance: self.tolerance,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 8 * self.kernels.len() * self.points.len().pow(2));
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for k in &self.kernels {
            for r in 0..k.nrows() {
                for c in 0..k.ncols() {
                    out.extend_from_slice(&k[(r, c)].to_le_bytes());
                }
            }
        }
        out
    }

    /// Inverse of [`to_binary`](Self::to_binary); the measure is not stored and is taken from `mu`.
    pub fn from_binary(bytes: &[u8], mu: Vec<f64>) -> Result<Self> {
        let bad = || Error::Io("malformed kernel block".into());
        let len = u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().map_err(|_| bad())?) as usize;
        let header: BinaryHeader =
            serde_json::from_slice(bytes.get(8..8 + len).ok_or_else(bad)?).map_err(|e| Error::Io(e.to_string()))?;
        let n = header.points.len();
        let body = &bytes[8 + len..];
        if body.len() != 8 * n * n * header.times.len() || mu.len() != n {
            return Err(bad());
        }
        let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let kernels = vals.chunks(n * n).map(|c| DMatrix::from_row_slice(n, n, c)).collect();
        Ok(HeatKernelTable {
            times: header.times,
            points: header.points,
            mu,
            kernels,
            method: header.method,
            tolerance: header.tolerance,
        })
    }
}
