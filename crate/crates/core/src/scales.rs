//! Scale functions: continuous, strictly increasing piecewise power laws, and
//! the calculus built on a diffusive/jump pair of them.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const CONTINUITY_TOL: f64 = 1e-9;

/// `coeff * r^exponent` for `r >= start` (up to the next piece).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPiece {
    #[serde(rename = "break")]
    pub start: f64,
    pub coeff: f64,
    #[serde(rename = "exp")]
    pub exponent: f64,
}

impl PowerPiece {
    fn eval(&self, r: f64) -> f64 {
        self.coeff * r.powf(self.exponent)
    }
}

/// A continuous, strictly increasing piecewise power law on `(0, inf)`.
///
/// The first piece starts at 0; subsequent starts are strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PowerPiece>", into = "Vec<PowerPiece>")]
pub struct ScaleFunction {
    pieces: Vec<PowerPiece>,
}

impl TryFrom<Vec<PowerPiece>> for ScaleFunction {
    type Error = Error;
    fn try_from(pieces: Vec<PowerPiece>) -> Result<Self> {
        ScaleFunction::new(pieces)
    }
}

impl From<ScaleFunction> for Vec<PowerPiece> {
    fn from(f: ScaleFunction) -> Self {
        f.pieces
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Forward,
    Inverse,
}

/// Exponents and constants with `c1 (R/r)^b1 <= f(R)/f(r) <= c2 (R/r)^b2` for `r <= R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBounds {
    pub beta1: f64,
    pub beta2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ScaleFunction {
    pub fn new(pieces: Vec<PowerPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Construction("scale function needs at least one piece".into()));
        }
        if pieces[0].start != 0.0 {
            return Err(Error::Construction(format!(
                "first piece must start at 0, got {}",
                pieces[0].start
            )));
        }
        for (i, p) in pieces.iter().enumerate() {
            if !(p.coeff > 0.0 && p.coeff.is_finite()) || !(p.exponent > 0.0 && p.exponent.is_finite()) {
                return Err(Error::Construction(format!("piece {i} needs positive finite coeff and exponent")));
            }
            if i > 0 {
                let prev = &pieces[i - 1];
                if !(p.start > prev.start && p.start.is_finite()) {
                    return Err(Error::Construction(format!("breakpoints must increase strictly at piece {i}")));
                }
                let left = prev.eval(p.start);
                let right = p.eval(p.start);
                if (left - right).abs() > CONTINUITY_TOL * left.abs().max(right.abs()) {
                    return Err(Error::Construction(format!(
                        "discontinuity at r={}: {} vs {}",
                        p.start, left, right
                    )));
                }
            }
        }
        Ok(ScaleFunction { pieces })
    }

    /// `coeff * r^exponent` on the whole half-line.
    pub fn power(coeff: f64, exponent: f64) -> Result<Self> {
        Self::new(vec![PowerPiece { start: 0.0, coeff, exponent }])
    }

    /// Continuous power law with the given exponents between breakpoints,
    /// normalized so that `f(1) = 1`.
    pub fn from_exponents(breaks: &[f64], exponents: &[f64]) -> Result<Self> {
        if exponents.len() != breaks.len() + 1 {
            return Err(Error::Construction("need one more exponent than breakpoints".into()));
        }
        let mut pieces = vec![PowerPiece { start: 0.0, coeff: 1.0, exponent: exponents[0] }];
        for (i, &b) in breaks.iter().enumerate() {
            let prev = pieces[i];
            let v = prev.eval(b);
            pieces.push(PowerPiece { start: b, coeff: v / b.powf(exponents[i + 1]), exponent: exponents[i + 1] });
        }
        let f = Self::new(pieces)?;
        Ok(f.normalized().0)
    }

    pub fn pieces(&self) -> &[PowerPiece] {
        &self.pieces
    }

    /// Rescales so that `f(1) = 1`; the flag reports whether anything changed.
    pub fn normalized(&self) -> (Self, bool) {
        let v1 = self.value(1.0);
        if (v1 - 1.0).abs() <= 1e-12 {
            return (self.clone(), false);
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| PowerPiece { coeff: p.coeff / v1, ..*p })
            .collect();
        (ScaleFunction { pieces }, true)
    }

    fn piece_index(&self, r: f64) -> usize {
        self.pieces.partition_point(|p| p.start <= r).saturating_sub(1)
    }

    /// `f(r)`, with `f(r) = 0` for `r <= 0`.
    pub fn value(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.pieces[self.piece_index(r)].eval(r)
    }

    /// `f^{-1}(v)`, with `f^{-1}(v) = 0` for `v <= 0`.
    pub fn inverse(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let idx = self
            .pieces
            .partition_point(|p| p.start == 0.0 || p.eval(p.start) <= v)
            .saturating_sub(1);
        let p = &self.pieces[idx];
        (v / p.coeff).powf(1.0 / p.exponent)
    }

    pub fn eval_inverse(&self, mode: EvalMode, v: f64) -> Result<f64> {
        if !(v > 0.0) || !v.is_finite() {
            return domain(format!("scale argument must be positive and finite, got {v}"));
        }
        Ok(match mode {
            EvalMode::Forward => self.value(v),
            EvalMode::Inverse => self.inverse(v),
        })
    }

    pub fn min_exponent(&self) -> f64 {
        self.pieces.iter().map(|p| p.exponent).fold(f64::INFINITY, f64::min)
    }

    pub fn max_exponent(&self) -> f64 {
        self.pieces.iter().map(|p| p.exponent).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact power bounds. The constants are the extreme ratios over all
    /// breakpoint pairs, where `log f - beta log r` attains its extremes.
    pub fn power_bounds(&self) -> PowerBounds {
        let beta1 = self.min_exponent();
        let beta2 = self.max_exponent();
        let mut nodes: Vec<f64> = self.pieces.iter().skip(1).map(|p| p.start).collect();
        nodes.push(1.0);
        nodes.sort_by(f64::total_cmp);
        let mut c1 = f64::INFINITY;
        let mut c2: f64 = 0.0;
        for (i, &r) in nodes.iter().enumerate() {
            for &big in &nodes[i..] {
                let q = self.value(big) / self.value(r);
                let s = big / r;
                c1 = c1.min(q / s.powf(beta1));
                c2 = c2.max(q / s.powf(beta2));
            }
        }
        PowerBounds { beta1, beta2, c1, c2 }
    }

    /// `f(r)/r`; strictly increasing when every exponent exceeds 1.
    pub fn over_r(&self) -> Result<Self> {
        if self.min_exponent() <= 1.0 {
            return Err(Error::Construction(
                "every exponent of the diffusive scale must exceed 1".into(),
            ));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| PowerPiece { exponent: p.exponent - 1.0, ..*p })
            .collect();
        Self::new(pieces)
    }

    /// Pointwise minimum of two scale functions, again a piecewise power law.
    pub fn pointwise_min(&self, other: &Self) -> Self {
        let mut breaks: Vec<f64> = self
            .pieces
            .iter()
            .chain(other.pieces.iter())
            .map(|p| p.start)
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut out: Vec<PowerPiece> = Vec::new();
        let mut push = |start: f64, piece: PowerPiece| {
            if let Some(last) = out.last() {
                if rel_eq(last.coeff, piece.coeff) && rel_eq(last.exponent, piece.exponent) {
                    return;
                }
            }
            out.push(PowerPiece { start, ..piece });
        };
        for (i, &lo) in breaks.iter().enumerate() {
            let hi = breaks.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let a = self.pieces[self.piece_index(lo)];
            let b = other.pieces[other.piece_index(lo)];
            let mut cuts = vec![lo];
            if a.exponent != b.exponent {
                let rc = (b.coeff / a.coeff).powf(1.0 / (a.exponent - b.exponent));
                if rc > lo && rc < hi {
                    cuts.push(rc);
                }
            }
            for (k, &s) in cuts.iter().enumerate() {
                let e = cuts.get(k + 1).copied().unwrap_or(hi);
                let probe = if s == 0.0 {
                    if e.is_finite() { e * 0.5 } else { 1.0 }
                } else if e.is_finite() {
                    (s * e).sqrt()
                } else {
                    2.0 * s
                };
                let chosen = if a.eval(probe) <= b.eval(probe) { a } else { b };
                push(s, chosen);
            }
        }
        ScaleFunction { pieces: out }
    }

    /// Breakpoints strictly inside `(0, inf)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.start).collect()
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Checks `a <= b` on `[lo, hi]` (either end may be 0 or infinite). The ratio
/// of two piecewise power laws is monotone between merged breakpoints, so the
/// endpoints and the limits at 0 and infinity decide.
fn dominated_on(a: &ScaleFunction, b: &ScaleFunction, lo: f64, hi: f64) -> bool {
    let tol = 1e-10;
    let mut nodes: Vec<f64> = a
        .breakpoints()
        .into_iter()
        .chain(b.breakpoints())
        .filter(|&r| r > lo && r < hi)
        .collect();
    if lo > 0.0 {
        nodes.push(lo);
    }
    if hi.is_finite() {
        nodes.push(hi);
    }
    for &r in &nodes {
        if a.value(r) > b.value(r) * (1.0 + tol) {
            return false;
        }
    }
    let limit_ok = |pa: &PowerPiece, pb: &PowerPiece, at_zero: bool| -> bool {
        if pa.exponent == pb.exponent {
            pa.coeff <= pb.coeff * (1.0 + tol)
        } else if at_zero {
            pa.exponent > pb.exponent
        } else {
            pa.exponent < pb.exponent
        }
    };
    if lo == 0.0 && !limit_ok(&a.pieces[0], &b.pieces[0], true) {
        return false;
    }
    if hi.is_infinite() && !limit_ok(a.pieces.last().unwrap(), b.pieces.last().unwrap(), false) {
        return false;
    }
    true
}

/// The diffusive scale `phi_c`, the jump scale `phi_j`, their minimum `phi`
/// and the effective diffusion scale `bar_phi_c(r) = phi_c(r)/r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScaleSpec", into = "ScaleSpec")]
pub struct ScaleTriple {
    phi_c: ScaleFunction,
    phi_j: ScaleFunction,
    phi: ScaleFunction,
    bar_phi_c: ScaleFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub phi_c: ScaleFunction,
    pub phi_j: ScaleFunction,
}

impl TryFrom<ScaleSpec> for ScaleTriple {
    type Error = Error;
    fn try_from(s: ScaleSpec) -> Result<Self> {
        ScaleTriple::new(s.phi_c, s.phi_j)
    }
}

impl From<ScaleTriple> for ScaleSpec {
    fn from(t: ScaleTriple) -> Self {
        ScaleSpec { phi_c: t.phi_c, phi_j: t.phi_j }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveMode {
    BarPhiC,
    MOf,
}

/// Result of the crossover search between the Gaussian and jump regimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub radius: f64,
    pub residual: f64,
    pub phi_c_inv: f64,
    pub phi_j_inv: f64,
    pub log_factor: f64,
    pub exponent_lo: f64,
    pub exponent_hi: f64,
    /// Largest `c3` with `c3 * a * L^exponent_lo <= radius`.
    pub c3: f64,
    /// Smallest `c4` with `radius <= c4 * a * L^exponent_hi`.
    pub c4: f64,
}

impl ScaleTriple {
    pub fn new(phi_c: ScaleFunction, phi_j: ScaleFunction) -> Result<Self> {
        for (name, f) in [("phi_c", &phi_c), ("phi_j", &phi_j)] {
            let v = f.value(1.0);
            if (v - 1.0).abs() > 1e-9 {
                return Err(Error::Construction(format!("{name}(1) must be 1, got {v}")));
            }
        }
        let bar_phi_c = phi_c.over_r()?;
        if !dominated_on(&phi_c, &phi_j, 0.0, 1.0) {
            return Err(Error::Construction("need phi_c <= phi_j on (0,1]".into()));
        }
        if !dominated_on(&phi_j, &phi_c, 1.0, f64::INFINITY) {
            return Err(Error::Construction("need phi_c >= phi_j on [1,inf)".into()));
        }
        let phi = phi_c.pointwise_min(&phi_j);
        Ok(ScaleTriple { phi_c, phi_j, phi, bar_phi_c })
    }

    /// `phi_c = r^beta_c`, `phi_j = r^alpha`.
    pub fn powers(beta_c: f64, alpha: f64) -> Result<Self> {
        Self::new(ScaleFunction::power(1.0, beta_c)?, ScaleFunction::power(1.0, alpha)?)
    }

    pub fn phi_c(&self) -> &ScaleFunction {
        &self.phi_c
    }
    pub fn phi_j(&self) -> &ScaleFunction {
        &self.phi_j
    }
    pub fn phi(&self) -> &ScaleFunction {
        &self.phi
    }
    pub fn bar_phi_c(&self) -> &ScaleFunction {
        &self.bar_phi_c
    }

    /// `m(t,r) = r / bar_phi_c^{-1}(t/r)`, with `m(t,0) = 0`.
    pub fn m(&self, t: f64, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        r / self.bar_phi_c.inverse(t / r)
    }

    pub fn effective_scale(&self, mode: EffectiveMode, t: f64, r: f64) -> Result<f64> {
        match mode {
            EffectiveMode::BarPhiC => {
                if !(r > 0.0) {
                    return domain("radius must be positive");
                }
                Ok(self.bar_phi_c.value(r))
            }
            EffectiveMode::MOf => {
                if !(t > 0.0 && r > 0.0) || !t.is_finite() || !r.is_finite() {
                    return domain("time and radius must be positive and finite");
                }
                Ok(self.m(t, r))
            }
        }
    }

    /// `sup_{s>0} { r/s - c0 t / phi_c(s) }`, exact per power piece.
    pub fn legendre_sup(&self, r: f64, t: f64, c0: f64) -> Result<f64> {
        check_positive(&[r, t, c0])?;
        Ok(self.legendre_closed(r, t, c0).0)
    }

    /// Value and maximizer of the Legendre supremum; `s = inf` encodes the
    /// vanishing limit.
    pub fn legendre_closed(&self, r: f64, t: f64, c0: f64) -> (f64, f64) {
        let g = |s: f64| r / s - c0 * t / self.phi_c.value(s);
        let pieces = self.phi_c.pieces();
        let mut best = (0.0, f64::INFINITY);
        for (i, p) in pieces.iter().enumerate() {
            let end = pieces.get(i + 1).map(|q| q.start).unwrap_or(f64::INFINITY);
            let k = c0 * t / p.coeff;
            let u = (r / (p.exponent * k)).powf(1.0 / (p.exponent - 1.0));
            let s = (1.0 / u).max(p.start).min(end);
            if s.is_finite() && s > 0.0 {
                let v = g(s);
                if v > best.0 {
                    best = (v, s);
                }
            }
        }
        best
    }

    /// Legendre supremum by a 512-point log grid over 8 decades either side of
    /// `phi_c^{-1}(t)` followed by golden-section refinement.
    pub fn legendre_sup_grid(&self, r: f64, t: f64, c0: f64) -> Result<f64> {
        check_positive(&[r, t, c0])?;
        let g = |ls: f64| {
            let s = ls.exp();
            r / s - c0 * t / self.phi_c.value(s)
        };
        let center = self.phi_c.inverse(t).ln();
        let span = 8.0 * std::f64::consts::LN_10;
        let n = 512;
        let node = |k: usize| center - span + 2.0 * span * k as f64 / (n - 1) as f64;
        let (mut kbest, mut vbest) = (0, f64::NEG_INFINITY);
        for k in 0..n {
            let v = g(node(k));
            if v > vbest {
                vbest = v;
                kbest = k;
            }
        }
        let mut a = node(kbest.saturating_sub(1));
        let mut b = node((kbest + 1).min(n - 1));
        let phi_ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - phi_ratio * (b - a);
        let mut x2 = a + phi_ratio * (b - a);
        let (mut f1, mut f2) = (g(x1), g(x2));
        // Width in log s translates to relative width in s.
        while b - a > 1e-12 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi_ratio * (b - a);
                f2 = g(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi_ratio * (b - a);
                f1 = g(x1);
            }
        }
        Ok(vbest.max(f1).max(f2).max(0.0))
    }

    /// Certified bracket `[lo, hi]` for `legendre_sup(r,t,c0) / m(t,r)`, uniform in
    /// `(t, r)`, from the exact power bounds of `phi_c`.
    pub fn legendre_bracket(&self, c0: f64) -> (f64, f64) {
        let pb = self.phi_c.power_bounds();
        let h = |l: f64, beta: f64| 1.0 / l - c0 * l.powf(-beta);
        let sup_above = |beta: f64| {
            let l = (c0 * beta).powf(1.0 / (beta - 1.0));
            if l >= 1.0 { h(l, beta) } else { h(1.0, beta) }
        };
        let sup_below = |beta: f64| {
            let l = (c0 * beta).powf(1.0 / (beta - 1.0));
            if l <= 1.0 { h(l, beta) } else { h(1.0, beta) }
        };
        let lo = sup_above(pb.beta1).max(sup_below(pb.beta2)).max(0.0);
        let hi = sup_above(pb.beta2).max(sup_below(pb.beta1)).max(0.0);
        (lo, hi)
    }

    /// Radius where `exp(C* m(t,r)) = c* r / phi_j^{-1}(t)`, with the fitted
    /// log-bracket constants.
    pub fn crossover_radius(&self, t: f64, c_star_big: f64, c_star: f64) -> Result<CrossoverReport> {
        check_positive(&[t, c_star_big, c_star])?;
        if t >= 1.0 {
            return Err(Error::Degenerate(format!("scales coincide: t={t} is not below 1")));
        }
        let a = self.phi_c.inverse(t);
        let b = self.phi_j.inverse(t);
        if !(a > b * (1.0 + 1e-12)) {
            return Err(Error::Degenerate("scales coincide: phi_c^{-1}(t) <= phi_j^{-1}(t)".into()));
        }
        let h = |r: f64| c_star_big * self.m(t, r) - (c_star * r / b).ln();
        let mut lo = a;
        let mut hi = 1e12 * a;
        if !(h(lo) < 0.0 && h(hi) > 0.0) {
            return Err(Error::Degenerate("scales coincide: no sign change in bracket".into()));
        }
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-15 {
                break;
            }
        }
        let radius = 0.5 * (lo + hi);
        let pb = self.phi_c.power_bounds();
        let log_factor = (a / b).ln();
        let exponent_lo = (pb.beta1 - 1.0) / pb.beta2;
        let exponent_hi = (pb.beta2 - 1.0) / pb.beta1;
        Ok(CrossoverReport {
            radius,
            residual: h(radius).abs(),
            phi_c_inv: a,
            phi_j_inv: b,
            log_factor,
            exponent_lo,
            exponent_hi,
            c3: radius / (a * log_factor.powf(exponent_lo)),
            c4: radius / (a * log_factor.powf(exponent_hi)),
        })
    }
}

fn check_positive(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        domain(format!("arguments must be positive and finite: {vals:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect_inverse(f: &ScaleFunction, v: f64) -> f64 {
        let (mut lo, mut hi) = (1e-300f64, 1e300f64);
        for _ in 0..3000 {
            let mid = (lo * hi).sqrt();
            if f.value(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    }

    fn min_r2_r() -> ScaleFunction {
        ScaleFunction::power(1.0, 2.0).unwrap().pointwise_min(&ScaleFunction::power(1.0, 1.0).unwrap())
    }

    #[test]
    fn forward_and_inverse_of_square() {
        let f = ScaleFunction::power(1.0, 2.0).unwrap();
        assert_eq!(f.eval_inverse(EvalMode::Forward, 3.0).unwrap(), 9.0);
        assert!((f.eval_inverse(EvalMode::Inverse, 9.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(matches!(f.eval_inverse(EvalMode::Forward, 0.0), Err(Error::Domain(_))));
        assert!(matches!(f.eval_inverse(EvalMode::Inverse, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_of_min_matches_bisection() {
        let f = min_r2_r();
        assert_eq!(f.pieces().len(), 2);
        let r = f.inverse(4.0);
        let oracle = bisect_inverse(&f, 4.0);
        assert!((r - 4.0).abs() < 1e-12);
        assert!((r - oracle).abs() < 1e-10);
        for v in [1e-6, 0.3, 0.999, 1.0, 1.5, 1e5] {
            let r = f.inverse(v);
            assert!((r - bisect_inverse(&f, v)).abs() <= 1e-10 * r.max(1.0));
            assert!((f.value(r) - v).abs() <= 1e-12 * v);
        }
    }

    #[test]
    fn power_bounds_examples() {
        let pb = min_r2_r().power_bounds();
        assert_eq!((pb.beta1, pb.beta2), (1.0, 2.0));
        let pb = ScaleFunction::power(1.0, 0.7).unwrap().power_bounds();
        assert_eq!((pb.beta1, pb.beta2, pb.c1, pb.c2), (0.7, 0.7, 1.0, 1.0));
        // r^2 below 1, r^0.5 above: exhaustive log-grid ratio sweep as oracle.
        let f = ScaleFunction::from_exponents(&[1.0], &[2.0, 0.5]).unwrap();
        let pb = f.power_bounds();
        assert_eq!((pb.beta1, pb.beta2), (0.5, 2.0));
        let grid: Vec<f64> = (0..200).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 199.0)).collect();
        let (mut lo, mut hi) = (f64::INFINITY, 0f64);
        for (i, &r) in grid.iter().enumerate() {
            for &big in &grid[i..] {
                let q = f.value(big) / f.value(r);
                lo = lo.min(q / (big / r).powf(pb.beta1));
                hi = hi.max(q / (big / r).powf(pb.beta2));
            }
        }
        assert!(pb.c1 <= lo * (1.0 + 1e-12) && pb.c2 >= hi * (1.0 - 1e-12));
        assert!((pb.c1 - lo).abs() < 1e-9 && (pb.c2 - hi).abs() < 1e-9);
    }

    #[test]
    fn m_of_examples() {
        let t2 = ScaleTriple::powers(2.0, 1.0).unwrap();
        assert!((t2.m(1.0, 4.0) - 16.0).abs() < 1e-12);
        assert!((t2.bar_phi_c().value(3.0) - 3.0).abs() < 1e-15);
        let t3 = ScaleTriple::powers(3.0, 1.0).unwrap();
        // Root of bar_phi_c(2/m) = 1/2 by bisection.
        let (mut lo, mut hi) = (1e-6, 1e6);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if t3.bar_phi_c().value(2.0 / mid) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m = t3.m(1.0, 2.0);
        assert!((m - 0.5 * (lo + hi)).abs() < 1e-10);
        assert!((m - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn legendre_square_closed_form() {
        let t2 = ScaleTriple::powers(2.0, 1.0).unwrap();
        assert!((t2.legendre_sup(2.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
        let (_, s) = t2.legendre_closed(2.0, 1.0, 1.0);
        assert!((s - 1.0).abs() < 1e-14);
        assert!(t2.legendre_sup(1e-9, 1.0, 1.0).unwrap() < 1e-15);
        assert_eq!(t2.legendre_bracket(1.0), (0.25, 0.25));
        let grid = t2.legendre_sup_grid(2.0, 1.0, 1.0).unwrap();
        assert!((grid - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crossover_square_linear() {
        let t = ScaleTriple::powers(2.0, 1.0).unwrap();
        let rep = t.crossover_radius(1e-4, 1.0, 1.0).unwrap();
        assert!(rep.residual < 1e-10);
        assert!((rep.exponent_lo - 0.5).abs() < 1e-15 && (rep.exponent_hi - 0.5).abs() < 1e-15);
        assert!(rep.radius > rep.phi_c_inv);
        assert_eq!(rep.c3, rep.c4);
        assert!(matches!(t.crossover_radius(0.999_999_999_999, 1.0, 1.0), Err(Error::Degenerate(_))));
        assert!(matches!(t.crossover_radius(1.5, 1.0, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn triple_rejects_bad_order_and_exponents() {
        assert!(ScaleTriple::powers(1.0, 0.5).is_err());
        assert!(ScaleTriple::powers(2.0, 3.0).is_err());
        assert!(ScaleTriple::new(
            ScaleFunction::power(2.0, 2.0).unwrap(),
            ScaleFunction::power(1.0, 1.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn discontinuous_pieces_rejected() {
        let bad = vec![
            PowerPiece { start: 0.0, coeff: 1.0, exponent: 2.0 },
            PowerPiece { start: 1.0, coeff: 2.0, exponent: 1.0 },
        ];
        assert!(ScaleFunction::new(bad).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let t = ScaleTriple::new(
            ScaleFunction::power(1.0, 2.0).unwrap(),
            ScaleFunction::from_exponents(&[1.0], &[0.5, 1.5]).unwrap(),
        )
        .unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: ScaleTriple = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(s.contains("\"break\""));
    }
}
