//! Heat-kernel envelopes and sandwich fits: HK, HK_-, UHK, UHK_weak, UHKD, NL,
//! NDL, dominance regions, tail probabilities and the chaining lower bound.
//!
//! Every fit is a sup/inf over an explicit grid, so a certified constant is a
//! literal pointwise inequality on that grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{DirichletForm, HeatKernelTable};
use crate::report::{CheckResult, ConditionReport, RatioTable, Verdict};
use crate::scales::{CrossoverReport, ScaleTriple};
use crate::space::MetricMeasureSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    PcSup,
    PcExplicit,
    Pj,
    Diag,
}

/// Diffusive envelope at dilated time `c·t`, Legendre form.
pub fn pc_sup(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize, c: f64) -> f64 {
    let tt = c * t;
    let d = space.d(x, y);
    let e = if d > 0.0 { scales.legendre_closed(d, tt, 1.0).0 } else { 0.0 };
    (-e).exp() / space.volume(x, scales.phi_c().inverse(tt))
}

/// Diffusive envelope at dilated time `c·t`, explicit form `exp(-m(ct,d))`.
pub fn pc_explicit(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize, c: f64) -> f64 {
    let tt = c * t;
    (-scales.m(tt, space.d(x, y))).exp() / space.volume(x, scales.phi_c().inverse(tt))
}

/// `1/V(x,φj⁻¹(t)) ∧ t/(V(x,d) φj(d))`; the diagonal branch when `x = y`.
pub fn pj(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize) -> f64 {
    let diag = 1.0 / space.volume(x, scales.phi_j().inverse(t));
    let d = space.d(x, y);
    if d <= 0.0 {
        return diag;
    }
    diag.min(t / (space.volume(x, d) * scales.phi_j().value(d)))
}

/// `1/V(x, φ⁻¹(t))`.
pub fn diag(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize) -> f64 {
    1.0 / space.volume(x, scales.phi().inverse(t))
}

pub fn envelope_eval(
    scales: &ScaleTriple,
    space: &MetricMeasureSpace,
    kind: EnvelopeKind,
    t: f64,
    x: usize,
    y: usize,
    dilation: f64,
) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) || !(dilation > 0.0) {
        return Err(Error::Domain("envelope needs t > 0 and a positive dilation".into()));
    }
    Ok(match kind {
        EnvelopeKind::PcSup => pc_sup(scales, space, t, x, y, dilation),
        EnvelopeKind::PcExplicit => pc_explicit(scales, space, t, x, y, dilation),
        EnvelopeKind::Pj => pj(scales, space, t, x, y),
        EnvelopeKind::Diag => diag(scales, space, t, x),
    })
}

/// `1/V(φc⁻¹(t)) ∧ 1/V(φj⁻¹(t)) ∧ (p^(c)(c·t) + p^(j)(t))`.
pub fn hk_envelope(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize, c: f64) -> f64 {
    let a = 1.0 / space.volume(x, scales.phi_c().inverse(t));
    let b = 1.0 / space.volume(x, scales.phi_j().inverse(t));
    a.min(b).min(pc_explicit(scales, space, t, x, y, c) + pj(scales, space, t, x, y))
}

/// `1/V(φc⁻¹(t)) ∧ p^(c)(c·t)`: the sandwich of a form without jumps.
pub fn diffusive_envelope(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize, c: f64) -> f64 {
    let a = 1.0 / space.volume(x, scales.phi_c().inverse(t));
    a.min(pc_explicit(scales, space, t, x, y, c))
}

/// Lower envelope of HK_-: the diagonal term inside `c1 φ⁻¹(t)`, the jump term outside.
pub fn hk_minus_envelope(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize, c1: f64) -> f64 {
    let d = space.d(x, y);
    if d <= c1 * scales.phi().inverse(t) {
        diag(scales, space, t, x)
    } else {
        t / (space.volume(x, d) * scales.phi_j().value(d))
    }
}

/// `1/V(φ⁻¹(t)) ∧ t/(V(x,d) φ(d))`.
pub fn uhk_weak_envelope(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize) -> f64 {
    let a = diag(scales, space, t, x);
    let d = space.d(x, y);
    if d <= 0.0 {
        return a;
    }
    a.min(t / (space.volume(x, d) * scales.phi().value(d)))
}

/// `n` log-spaced times over `[φ(h), φ(margin)]`.
pub fn default_times(scales: &ScaleTriple, space: &MetricMeasureSpace, n: usize) -> Vec<f64> {
    let lo = scales.phi().value(space.spacing());
    let hi = scales.phi().value(space.margin());
    log_grid(lo, hi, n)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

/// Largest grid time (over the leading run of grid times) at which every `x`
/// in `xs` has less than 1% of its kernel mass on the truncation boundary.
pub fn boundary_t_max(kernel: &HeatKernelTable, space: &MetricMeasureSpace, xs: &[usize]) -> f64 {
    let band: Vec<usize> = space.boundary().iter().filter_map(|&b| kernel.local_index(b)).collect();
    let mut t_max = 0.0;
    for (ti, &t) in kernel.times.iter().enumerate() {
        let ok = xs.iter().filter_map(|&x| kernel.local_index(x)).all(|xl| {
            band.iter().map(|&b| kernel.p(ti, xl, b) * kernel.mu[b]).sum::<f64>() < 0.01
        });
        if !ok {
            break;
        }
        t_max = t;
    }
    t_max
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HkMode {
    Hk,
    HkMinus,
    Uhk,
    UhkWeak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeOptions {
    /// Time dilation inside the upper diffusive envelope.
    pub upper_dilation: f64,
    /// Time dilation inside the lower diffusive envelope.
    pub lower_dilation: f64,
    /// Radius factor `c1` separating the two HK_- branches.
    pub hk_minus_radius: f64,
    /// Drop triples with `d > max_speed · t`; graph walks leave the Gaussian
    /// regime beyond a finite speed.
    pub max_speed: Option<f64>,
    /// Kernel values below `floor · p(t,x,x)` are round-off; they are excluded and counted.
    pub floor: f64,
    /// Keep every `thin`-th interior point as a fit centre.
    pub thin: usize,
    /// Store per-triple rows (large on big grids).
    pub keep_rows: bool,
    /// Include the jump branch in the HK sandwich; off for forms without jumps.
    pub jump_term: bool,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            upper_dilation: 8.0,
            lower_dilation: 1.0,
            hk_minus_radius: 1.0,
            max_speed: None,
            floor: 1e-12,
            thin: 1,
            keep_rows: true,
            jump_term: true,
        }
    }
}

impl EnvelopeOptions {
    fn admits(&self, t: f64, d: f64) -> bool {
        self.max_speed.is_none_or(|v| d <= v * t)
    }

    fn sandwich(&self, scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize, c: f64) -> f64 {
        if self.jump_term {
            hk_envelope(scales, space, t, x, y, c)
        } else {
            diffusive_envelope(scales, space, t, x, y, c)
        }
    }
}

/// Fitted sandwich constants and the grid they were fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub minus_c0: f64,
    pub minus_c1: f64,
    pub weak_c2: f64,
    pub times: Vec<f64>,
    pub t_max: f64,
    pub triples: usize,
    pub excluded: usize,
}

/// Fits HK, HK_-, UHK or UHK_weak on every grid triple `(t ≤ t_max, x interior, y)`.
pub fn fit_hk(
    kernel: &HeatKernelTable,
    scales: &ScaleTriple,
    space: &MetricMeasureSpace,
    mode: HkMode,
    opts: &EnvelopeOptions,
) -> Result<(EnvelopeParams, CheckResult)> {
    let xs: Vec<usize> = space.interior().into_iter().step_by(opts.thin.max(1)).collect();
    if xs.is_empty() {
        return Err(Error::Domain("no interior points for the envelope fit".into()));
    }
    let t_max = boundary_t_max(kernel, space, &xs);
    let times: Vec<(usize, f64)> = kernel.times.iter().cloned().enumerate().filter(|(_, t)| *t <= t_max).collect();
    let mut table = RatioTable::new(&["t", "x", "y", "ratio_upper", "ratio_lower"]);
    let mut upper = 0.0f64;
    let mut lower = f64::INFINITY;
    let mut weak = 0.0f64;
    let mut minus = f64::INFINITY;
    let mut w_up = (0.0, 0usize, 0usize);
    let mut w_lo = (0.0, 0usize, 0usize);
    let (mut triples, mut excluded) = (0usize, 0usize);
    for &(ti, t) in &times {
        for &x in &xs {
            let xl = kernel.local_index(x).ok_or_else(|| Error::Domain("kernel does not cover the fit point".into()))?;
            let cutoff = opts.floor * kernel.p(ti, xl, xl);
            for (yl, &y) in kernel.points.iter().enumerate() {
                let d = space.d(x, y);
                if !opts.admits(t, d) {
                    continue;
                }
                let p = kernel.p(ti, xl, yl);
                if !(p > cutoff) {
                    excluded += 1;
                    continue;
                }
                triples += 1;
                let up = p / opts.sandwich(scales, space, t, x, y, opts.upper_dilation);
                let lo = match mode {
                    HkMode::Hk => p / opts.sandwich(scales, space, t, x, y, opts.lower_dilation),
                    HkMode::HkMinus => p / hk_minus_envelope(scales, space, t, x, y, opts.hk_minus_radius),
                    HkMode::Uhk | HkMode::UhkWeak => f64::NAN,
                };
                let wk = p / uhk_weak_envelope(scales, space, t, x, y);
                if up > upper {
                    upper = up;
                    w_up = (t, x, y);
                }
                if lo < lower {
                    lower = lo;
                    w_lo = (t, x, y);
                }
                if mode == HkMode::HkMinus {
                    minus = minus.min(lo);
                }
                weak = weak.max(wk);
                if opts.keep_rows {
                    table.push(vec![t, x as f64, y as f64, up, if mode == HkMode::UhkWeak { wk } else { lo }]);
                }
            }
        }
    }
    let name = match mode {
        HkMode::Hk => "HK",
        HkMode::HkMinus => "HK_minus",
        HkMode::Uhk => "UHK",
        HkMode::UhkWeak => "UHK_weak",
    };
    if triples == 0 {
        let r = ConditionReport::new(name, Verdict::Skipped).note("no admissible grid triple below t_max");
        let params = EnvelopeParams {
            c1: f64::NAN,
            c2: opts.lower_dilation,
            c3: f64::NAN,
            c4: opts.upper_dilation,
            minus_c0: f64::NAN,
            minus_c1: opts.hk_minus_radius,
            weak_c2: f64::NAN,
            times: vec![],
            t_max,
            triples,
            excluded,
        };
        return Ok((params, CheckResult::new(r, table)));
    }
    let params = EnvelopeParams {
        c1: if mode == HkMode::Hk { lower } else { f64::NAN },
        c2: opts.lower_dilation,
        c3: upper,
        c4: opts.upper_dilation,
        minus_c0: if mode == HkMode::HkMinus { minus } else { f64::NAN },
        minus_c1: opts.hk_minus_radius,
        weak_c2: weak,
        times: times.iter().map(|p| p.1).collect(),
        t_max,
        triples,
        excluded,
    };
    let finite_pos = |v: f64| v.is_finite() && v > 0.0;
    let verdict = match mode {
        HkMode::Hk | HkMode::HkMinus => finite_pos(upper) && finite_pos(lower),
        HkMode::Uhk => finite_pos(upper),
        HkMode::UhkWeak => finite_pos(weak),
    };
    let mut report = ConditionReport::new(name, if verdict { Verdict::Certified } else { Verdict::Failed })
        .range("t", params.times[0], *params.times.last().unwrap())
        .witness("t_upper", w_up.0)
        .witness("x_upper", w_up.1)
        .witness("y_upper", w_up.2)
        .witness("triples", triples)
        .witness("excluded", excluded);
    report = match mode {
        HkMode::Hk => report
            .constant("c1", lower)
            .constant("c2", opts.lower_dilation)
            .constant("c3", upper)
            .constant("c4", opts.upper_dilation)
            .constant("upper_lower_ratio", upper / lower),
        HkMode::HkMinus => report
            .constant("c0", lower)
            .constant("c1", opts.hk_minus_radius)
            .constant("c3", upper)
            .constant("c4", opts.upper_dilation),
        HkMode::Uhk => report.constant("c3", upper).constant("c4", opts.upper_dilation),
        HkMode::UhkWeak => report.constant("c2", weak),
    };
    if matches!(mode, HkMode::Hk | HkMode::HkMinus) {
        report = report.witness("t_lower", w_lo.0).witness("x_lower", w_lo.1).witness("y_lower", w_lo.2);
    }
    if let Some(v) = opts.max_speed {
        report = report.note(format!("triples with d > {v} t excluded"));
    }
    if !opts.jump_term {
        report = report.note("no jump branch: the form has no jumps");
    }
    Ok((params, CheckResult::new(report, table)))
}

/// Sandwich of the Legendre diffusive exponent between multiples of `m(t,d)`
/// over a log grid of `(t, d)`: `c2 = max ratio`, `c4 = min ratio`, `c1 = c3 = 1`.
pub fn check_pc_equivalence(scales: &ScaleTriple, decades: f64, points_per_axis: usize) -> Result<CheckResult> {
    let grid = log_grid(10f64.powf(-decades / 2.0), 10f64.powf(decades / 2.0), points_per_axis);
    let mut table = RatioTable::new(&["t", "d", "ratio"]);
    let (mut c2, mut c4) = (0.0f64, f64::INFINITY);
    for &t in &grid {
        for &d in &grid {
            let ratio = scales.legendre_sup(d, t, 1.0)? / scales.m(t, d);
            table.push(vec![t, d, ratio]);
            c2 = c2.max(ratio);
            c4 = c4.min(ratio);
        }
    }
    let (lo, hi) = scales.legendre_bracket(1.0);
    let ok = c2.is_finite() && c4 > 0.0;
    let report = ConditionReport::new("pc_equivalence", if ok { Verdict::Certified } else { Verdict::Failed })
        .constant("c1", 1.0)
        .constant("c2", c2)
        .constant("c3", 1.0)
        .constant("c4", c4)
        .constant("bracket_lo", lo)
        .constant("bracket_hi", hi)
        .range("t", grid[0], grid[grid.len() - 1])
        .range("d", grid[0], grid[grid.len() - 1]);
    Ok(CheckResult::new(report, table))
}

/// UHKD, NL and NDL on the kernel grid and Dirichlet kernels of interior balls.
pub fn diag_checks(
    form: &DirichletForm,
    kernel: &HeatKernelTable,
    scales: &ScaleTriple,
    centers: &[usize],
    radii: &[f64],
    epsilon: f64,
) -> Result<Vec<CheckResult>> {
    let space = form.space();
    let xs = space.interior();
    let t_max = boundary_t_max(kernel, space, &xs);
    let mut t_uhkd = RatioTable::new(&["t", "x", "ratio"]);
    let mut t_nl = RatioTable::new(&["t", "x", "y", "ratio"]);
    let (mut c_uhkd, mut c_nl) = (0.0f64, f64::INFINITY);
    for (ti, &t) in kernel.times.iter().enumerate() {
        if t > t_max {
            continue;
        }
        for &x in &xs {
            let Some(xl) = kernel.local_index(x) else { continue };
            let v = space.volume(x, scales.phi().inverse(t));
            let r = kernel.p(ti, xl, xl) * v;
            t_uhkd.push(vec![t, x as f64, r]);
            c_uhkd = c_uhkd.max(r);
            for y in space.ball(x, scales.phi().inverse(t) * (1.0 + 1e-12)) {
                if let Some(yl) = kernel.local_index(y) {
                    let r = kernel.p(ti, xl, yl) * v;
                    t_nl.push(vec![t, x as f64, y as f64, r]);
                    c_nl = c_nl.min(r);
                }
            }
        }
    }
    let mut t_ndl = RatioTable::new(&["x0", "r", "t", "x", "y", "ratio"]);
    let mut c_ndl = f64::INFINITY;
    let mut per_radius: Vec<(f64, f64)> = Vec::new();
    let mut ndl_w = (0usize, 0.0, 0.0);
    for &r in radii {
        let mut c_r = f64::INFINITY;
        for &x0 in centers {
            if !space.ball_is_interior(x0, r) {
                continue;
            }
            let ball = space.ball(x0, r);
            let t_top = scales.phi().value(epsilon * r);
            let times: Vec<f64> = (0..5).map(|k| t_top * 0.5f64.powi(k)).collect();
            let tab = form.heat_kernel(&times, Some(&ball))?;
            for (ti, &t) in times.iter().enumerate() {
                let v = space.volume(x0, scales.phi().inverse(t));
                let near = space.ball(x0, epsilon * scales.phi().inverse(t));
                for &x in &near {
                    for &y in &near {
                        let (xl, yl) = (tab.local_index(x).unwrap(), tab.local_index(y).unwrap());
                        let ratio = tab.p(ti, xl, yl) * v;
                        t_ndl.push(vec![x0 as f64, r, t, x as f64, y as f64, ratio]);
                        c_r = c_r.min(ratio);
                        if ratio < c_ndl {
                            c_ndl = ratio;
                            ndl_w = (x0, r, t);
                        }
                    }
                }
            }
        }
        if c_r.is_finite() {
            per_radius.push((r, c_r));
        }
    }
    let v = |ok: bool| if ok { Verdict::Certified } else { Verdict::Failed };
    let uhkd = ConditionReport::new("UHKD", v(c_uhkd.is_finite() && !t_uhkd.is_empty())).constant("c", c_uhkd).range("t", kernel.times[0], t_max);
    let nl = ConditionReport::new("NL", v(c_nl.is_finite() && c_nl > 0.0))
        .constant("c1", 1.0)
        .constant("c2", c_nl)
        .range("t", kernel.times[0], t_max);
    let mut ndl = if per_radius.is_empty() {
        ConditionReport::new("NDL", Verdict::Skipped)
    } else {
        ConditionReport::new("NDL", v(c_ndl > 0.0 && c_ndl.is_finite()))
            .constant("epsilon", epsilon)
            .constant("c1", c_ndl)
            .witness("x0", ndl_w.0)
            .witness("r", ndl_w.1)
            .witness("t", ndl_w.2)
    };
    for (r, c) in &per_radius {
        ndl = ndl.constant(&format!("c1_r{r}"), *c);
    }
    if c_ndl.is_finite() && c_nl.is_finite() && c_ndl > c_nl * (1.0 + 1e-12) {
        ndl = ndl.note("NDL constant exceeds the NL constant on this grid");
    }
    Ok(vec![CheckResult::new(uhkd, t_uhkd), CheckResult::new(nl, t_nl), CheckResult::new(ndl, t_ndl)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Diagonal,
    Gaussian,
    Jump,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Diagonal => "diagonal",
            Region::Gaussian => "gaussian",
            Region::Jump => "jump",
        }
    }
}

/// Dominant envelope branch per pair at a fixed time, with the empirical
/// Gaussian-to-jump crossover from one centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceMap {
    pub t: f64,
    pub center: usize,
    /// Row-major `n x n` labels.
    pub labels: Vec<Region>,
    pub n: usize,
    pub crossover: Option<f64>,
    pub bracket: Option<CrossoverReport>,
    /// `crossover / (a L^exponent_lo)` and `crossover / (a L^exponent_hi)`.
    pub c3: f64,
    pub c4: f64,
    /// Range of `p / dominant branch` over the centre's row, when a kernel is given.
    pub kernel_ratio: Option<(f64, f64)>,
}

pub fn label(scales: &ScaleTriple, space: &MetricMeasureSpace, t: f64, x: usize, y: usize, dilation: f64) -> Region {
    let d = space.d(x, y);
    if d <= scales.phi_c().inverse(t) {
        return Region::Diagonal;
    }
    let g = pc_explicit(scales, space, t, x, y, dilation);
    let j = t / (space.volume(x, d) * scales.phi_j().value(d));
    if j > g {
        Region::Jump
    } else {
        Region::Gaussian
    }
}

pub fn dominance_map(
    kernel: Option<(&HeatKernelTable, usize)>,
    scales: &ScaleTriple,
    space: &MetricMeasureSpace,
    t: f64,
    center: usize,
    dilation: f64,
) -> Result<DominanceMap> {
    let n = space.len();
    let mut labels = Vec::with_capacity(n * n);
    for x in 0..n {
        for y in 0..n {
            labels.push(label(scales, space, t, x, y, dilation));
        }
    }
    // Walk outward from the centre: first jump-dominated distance after a Gaussian one.
    let levels = space.distance_levels(center);
    let row_label = |d: f64| {
        (0..n).find(|&y| space.d(center, y) == d).map(|y| labels[center * n + y]).unwrap_or(Region::Diagonal)
    };
    let mut last_gauss = None;
    let mut crossover = None;
    for &d in &levels {
        match row_label(d) {
            Region::Gaussian => last_gauss = Some(d),
            Region::Jump => {
                if let Some(g) = last_gauss {
                    crossover = Some(0.5 * (g + d));
                    break;
                }
            }
            Region::Diagonal => {}
        }
    }
    let bracket = scales.crossover_radius(t, 1.0, 1.0).ok();
    let (mut c3, mut c4) = (f64::NAN, f64::NAN);
    if let (Some(r), Some(b)) = (crossover, &bracket) {
        c3 = r / (b.phi_c_inv * b.log_factor.powf(b.exponent_lo));
        c4 = r / (b.phi_c_inv * b.log_factor.powf(b.exponent_hi));
    }
    let kernel_ratio = kernel.map(|(k, ti)| {
        let xl = k.local_index(center).expect("centre in kernel");
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (yl, &y) in k.points.iter().enumerate() {
            let branch = match labels[center * n + y] {
                Region::Diagonal => 1.0 / space.volume(center, scales.phi_c().inverse(t)),
                Region::Gaussian => pc_explicit(scales, space, t, center, y, dilation),
                Region::Jump => {
                    let d = space.d(center, y);
                    t / (space.volume(center, d) * scales.phi_j().value(d))
                }
            };
            let r = k.p(ti, xl, yl) / branch;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    });
    Ok(DominanceMap { t, center, labels, n, crossover, bracket, c3, c4, kernel_ratio })
}

impl DominanceMap {
    pub fn region_count(&self) -> usize {
        let mut seen = [false; 3];
        for l in &self.labels {
            seen[*l as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }

    pub fn report(&self) -> ConditionReport {
        let ok = self.crossover.is_some() && self.c3.is_finite() && self.c4.is_finite() && self.c3 > 0.0;
        let mut r = ConditionReport::new("dominance", if ok { Verdict::Certified } else { Verdict::Failed })
            .constant("t", self.t)
            .constant("c3", self.c3)
            .constant("c4", self.c4)
            .constant("regions", self.region_count() as f64)
            .witness("center", self.center);
        if let Some(c) = self.crossover {
            r = r.constant("crossover", c);
        }
        if let Some(b) = &self.bracket {
            r = r.constant("model_crossover", b.radius).constant("log_factor", b.log_factor);
        }
        if let Some((lo, hi)) = self.kernel_ratio {
            r = r.range("kernel_over_branch", lo, hi);
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailOptions {
    /// Exponential rate `a1` in `exp(-a1 f(r,t))`.
    pub a1: f64,
    /// Cap on the exponential-term coefficient while fitting the power term.
    pub gaussian_cap: f64,
    /// Proof-internal parameter of the stretched-exponential variant.
    pub n_values: Vec<u32>,
    pub max_speed: Option<f64>,
    /// Volume growth exponent `d2` used by the stretched variant.
    pub d2: Option<f64>,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions { a1: 0.125, gaussian_cap: 4.0, n_values: vec![2, 4, 8], max_speed: None, d2: None }
    }
}

/// Fits `∫_{B(x,r)^c} p(t,x,·) dμ ≤ c_j (φj⁻¹(t)/r)^η + c_g exp(-a1 f(r,t))`
/// with `f(r,t) = r/φ̄c⁻¹(t/r)`.
pub fn tail_probability_check(
    kernel: &HeatKernelTable,
    scales: &ScaleTriple,
    space: &MetricMeasureSpace,
    radii: &[f64],
    opts: &TailOptions,
) -> Result<CheckResult> {
    let xs = space.interior();
    let t_max = boundary_t_max(kernel, space, &xs);
    let beta1 = scales.phi_j().power_bounds().beta1;
    let mut samples = Vec::new();
    for (ti, &t) in kernel.times.iter().enumerate() {
        if t > t_max {
            continue;
        }
        for &x in &xs {
            let Some(xl) = kernel.local_index(x) else { continue };
            for &r in radii {
                if r <= scales.phi().inverse(t) || !space.ball_is_interior(x, r) || opts.max_speed.is_some_and(|v| r > v * t) {
                    continue;
                }
                let tail: f64 = kernel
                    .points
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| space.d(x, y) >= r)
                    .map(|(yl, _)| kernel.p(ti, xl, yl) * kernel.mu[yl])
                    .sum();
                samples.push((t, x, r, tail.max(0.0)));
            }
        }
    }
    let mut table = RatioTable::new(&["t", "x", "r", "tail", "bound"]);
    if samples.is_empty() {
        return Ok(CheckResult::new(ConditionReport::new("tail_probability", Verdict::Skipped), table));
    }
    let gauss = |t: f64, r: f64| (-opts.a1 * scales.m(t, r)).exp();
    let power = |t: f64, r: f64, eta: f64| (scales.phi_j().inverse(t) / r).powf(eta);
    let fit = |eta: f64| {
        let cj = samples
            .iter()
            .map(|&(t, _, r, tail)| (tail - opts.gaussian_cap * gauss(t, r)).max(0.0) / power(t, r, eta))
            .fold(0.0, f64::max);
        let cg = samples
            .iter()
            .map(|&(t, _, r, tail)| (tail - cj * power(t, r, eta)).max(0.0) / gauss(t, r))
            .fold(0.0, f64::max);
        (cj, cg)
    };
    let etas = [0.25 * beta1, 0.5 * beta1, 0.75 * beta1, beta1];
    let base = {
        let (a, b) = fit(etas[0]);
        a.max(b)
    };
    let eta = etas.iter().cloned().filter(|&e| {
        let (a, b) = fit(e);
        a.max(b) <= 4.0 * base.max(f64::MIN_POSITIVE)
    }).fold(etas[0], f64::max);
    let (cj, cg) = fit(eta);
    for &(t, x, r, tail) in &samples {
        table.push(vec![t, x as f64, r, tail, cj * power(t, r, eta) + cg * gauss(t, r)]);
    }
    let ok = cj.is_finite() && cg.is_finite() && eta > 0.0 && eta <= beta1;
    let mut report = ConditionReport::new("tail_probability", if ok { Verdict::Certified } else { Verdict::Failed })
        .constant("eta", eta)
        .constant("a1", opts.a1)
        .constant("c1", cj.max(cg))
        .constant("c_jump", cj)
        .constant("c_gauss", cg)
        .constant("beta1_phi_j", beta1)
        .constant("c1_trivial_range", opts.a1.exp())
        .range("t", kernel.times[0], t_max);
    // Stretched-exponential variant with proof-internal N.
    let d2 = opts.d2.unwrap_or(space.volume_dim());
    for &nn in &opts.n_values {
        let nf = nn as f64;
        let eta_n = beta1 - (d2 + beta1) / nf;
        if eta_n <= 0.0 {
            report = report.note(format!("N={nn}: exponent not positive, skipped"));
            continue;
        }
        let c = samples
            .iter()
            .map(|&(t, _, r, tail)| {
                let b = power(t, r, eta_n) + (-opts.a1 * (r / scales.phi().inverse(t)).powf(1.0 / nf)).exp();
                tail / b
            })
            .fold(0.0, f64::max);
        report = report.constant(&format!("c1_N{nn}"), c).constant(&format!("eta_N{nn}"), eta_n);
    }
    Ok(CheckResult::new(report, table))
}

/// Chaining lower bound `p ≥ c5 c6^{m(t,d)} / V(x, φc⁻¹(t))` on triples with
/// `d/φc⁻¹(t) ∈ [ratio_lo, ratio_hi]`.
pub fn chain_lower_check(
    kernel: &HeatKernelTable,
    scales: &ScaleTriple,
    space: &MetricMeasureSpace,
    ratio_lo: f64,
    ratio_hi: f64,
    max_speed: Option<f64>,
) -> Result<CheckResult> {
    let chain = space.chain_check(64);
    if !chain.constant.is_finite() {
        return Ok(CheckResult::new(
            ConditionReport::new("chain_lower", Verdict::Skipped).note("space fails the chain condition"),
            RatioTable::default(),
        ));
    }
    let xs = space.interior();
    let t_max = boundary_t_max(kernel, space, &xs);
    let mut pts = Vec::new();
    for (ti, &t) in kernel.times.iter().enumerate() {
        if t > t_max {
            continue;
        }
        let a = scales.phi_c().inverse(t);
        for &x in &xs {
            let Some(xl) = kernel.local_index(x) else { continue };
            for (yl, &y) in kernel.points.iter().enumerate() {
                let d = space.d(x, y);
                if d < ratio_lo * a || d > ratio_hi * a || max_speed.is_some_and(|v| d > v * t) {
                    continue;
                }
                let p = kernel.p(ti, xl, yl);
                if p > 0.0 {
                    pts.push((scales.m(t, d), (p * space.volume(x, a)).ln(), t, x, y));
                }
            }
        }
    }
    let mut table = RatioTable::new(&["t", "x", "y", "m", "log_pv"]);
    if pts.len() < 2 {
        return Ok(CheckResult::new(ConditionReport::new("chain_lower", Verdict::Skipped).note("too few triples"), table));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { -1.0 };
    let c6 = slope.exp().clamp(1e-12, 1.0 - 1e-12);
    let mut c5 = f64::INFINITY;
    let mut w = (0.0, 0usize, 0usize);
    for &(m, lpv, t, x, y) in &pts {
        table.push(vec![t, x as f64, y as f64, m, lpv]);
        let c = (lpv - m * c6.ln()).exp();
        if c < c5 {
            c5 = c;
            w = (t, x, y);
        }
    }
    let ok = c5 > 0.0 && c5.is_finite();
    let report = ConditionReport::new("chain_lower", if ok { Verdict::Certified } else { Verdict::Failed })
        .constant("c5", c5)
        .constant("c6", c6)
        .constant("chain_C", chain.constant)
        .witness("t", w.0)
        .witness("x", w.1)
        .witness("y", w.2)
        .range("d_over_phi_c_inv", ratio_lo, ratio_hi);
    Ok(CheckResult::new(report, table))
}
