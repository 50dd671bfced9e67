//! Three operations on a one-dimensional segment, exposed to JavaScript as JSON
//! strings: a heat kernel profile against its envelope, the dominant envelope
//! branch per pair, and the jump intensities produced by subordination.

use std::sync::Arc;

use heatlab::envelopes::{dominance_map, hk_envelope, pc_explicit, pj, Region};
use heatlab::form::{DirichletForm, JumpKernel, JumpKind, JumpSpec};
use heatlab::scales::{ScaleFunction, ScaleTriple};
use heatlab::space::{MetricMeasureSpace, SpaceKind, SpaceParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest segment the demo builds; the kernel is a dense eigensolve.
pub const MAX_SIDE: usize = 256;

fn segment(side: usize, spacing: f64) -> Result<Arc<MetricMeasureSpace>, String> {
    if !(8..=MAX_SIDE).contains(&side) {
        return Err(format!("side must lie in 8..={MAX_SIDE}"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err("spacing must be positive".into());
    }
    let params = SpaceParams { dim: 1, side, spacing, ..Default::default() };
    MetricMeasureSpace::build(SpaceKind::LatticeBox, &params).map(Arc::new).map_err(|e| e.to_string())
}

/// Diffusion plus jumps `|x-y|^{-1-alpha}`; `alpha = 0` means no jumps.
fn model(side: usize, spacing: f64, alpha: f64) -> Result<(DirichletForm, ScaleTriple), String> {
    let space = segment(side, spacing)?;
    let jump = if alpha == 0.0 {
        JumpKernel::none(space.len())
    } else {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err("alpha must be 0 or lie in (0, 2)".into());
        }
        let spec = JumpSpec { kind: JumpKind::StableLike, alpha, ..Default::default() };
        JumpKernel::build(&space, &spec).map_err(|e| e.to_string())?
    };
    let jump_exp = if alpha == 0.0 { 2.0 } else { alpha };
    let scales = ScaleTriple::new(
        ScaleFunction::power(1.0, 2.0).map_err(|e| e.to_string())?,
        ScaleFunction::power(1.0, jump_exp).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let form = DirichletForm::assemble(space, 1.0, jump).map_err(|e| e.to_string())?;
    Ok((form, scales))
}

#[derive(Debug, Serialize)]
pub struct Profile {
    pub t: f64,
    pub distance: Vec<f64>,
    pub kernel: Vec<f64>,
    pub gaussian: Vec<f64>,
    pub jump: Vec<f64>,
    pub envelope: Vec<f64>,
}

/// `p(t, c, y)` from the centre `c` outwards, with the diffusive branch, the
/// jump branch and their combined envelope.
pub fn kernel_profile(side: usize, spacing: f64, alpha: f64, t: f64) -> Result<Profile, String> {
    if !(t > 0.0 && t.is_finite()) {
        return Err("t must be positive".into());
    }
    let (form, scales) = model(side, spacing, alpha)?;
    let space = form.space();
    let k = form.heat_kernel(&[t], None).map_err(|e| e.to_string())?;
    let c = space.center();
    let ys: Vec<usize> = {
        let mut v: Vec<usize> = (0..space.len()).filter(|&y| space.coords(y)[0] >= space.coords(c)[0]).collect();
        v.sort_by(|a, b| space.d(c, *a).total_cmp(&space.d(c, *b)));
        v
    };
    Ok(Profile {
        t,
        distance: ys.iter().map(|&y| space.d(c, y)).collect(),
        kernel: ys.iter().map(|&y| k.p(0, c, y)).collect(),
        gaussian: ys.iter().map(|&y| pc_explicit(&scales, space, t, c, y, 1.0)).collect(),
        jump: ys.iter().map(|&y| if alpha == 0.0 { 0.0 } else { pj(&scales, space, t, c, y) }).collect(),
        envelope: ys.iter().map(|&y| hk_envelope(&scales, space, t, c, y, 1.0)).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct Dominance {
    pub n: usize,
    /// Row-major labels: 0 diagonal, 1 Gaussian, 2 jump.
    pub labels: Vec<u8>,
    pub crossover: Option<f64>,
    pub counts: [usize; 3],
}

pub fn dominance(side: usize, spacing: f64, alpha: f64, t: f64) -> Result<Dominance, String> {
    if !(alpha > 0.0) {
        return Err("the dominance map needs jumps (alpha > 0)".into());
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err("t must be positive".into());
    }
    let (form, scales) = model(side, spacing, alpha)?;
    let space = form.space();
    let map = dominance_map(None, &scales, space, t, space.center(), 1.0).map_err(|e| e.to_string())?;
    let mut counts = [0usize; 3];
    let labels: Vec<u8> = map
        .labels
        .iter()
        .map(|r| {
            let k = match r {
                Region::Diagonal => 0,
                Region::Gaussian => 1,
                Region::Jump => 2,
            };
            counts[k as usize] += 1;
            k
        })
        .collect();
    Ok(Dominance { n: map.n, labels, crossover: map.crossover, counts })
}

#[derive(Debug, Serialize)]
pub struct Intensity {
    pub drift: f64,
    pub gamma: f64,
    pub distance: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Least-squares slope of `log J` against `log d` over the middle distances.
    pub slope: f64,
}

/// Jump intensities `J(c, y)` of the nearest-neighbour walk subordinated by `ψ(λ) = bλ + λ^γ`.
pub fn subordination_intensity(side: usize, drift: f64, gamma: f64) -> Result<Intensity, String> {
    let (form, _) = model(side, 1.0, 0.0)?;
    let sub = form.subordinate(drift, gamma).map_err(|e| e.to_string())?;
    let space = form.space();
    let c = space.center();
    let mut ys: Vec<usize> = (0..space.len()).filter(|&y| space.coords(y)[0] > space.coords(c)[0]).collect();
    ys.sort_by(|a, b| space.d(c, *a).total_cmp(&space.d(c, *b)));
    let distance: Vec<f64> = ys.iter().map(|&y| space.d(c, y)).collect();
    let intensity: Vec<f64> = ys.iter().map(|&y| sub.jump().get(c, y)).collect();
    // Middle range: away from the nearest neighbours and from the boundary.
    let (lo, hi) = (distance.len() / 16 + 2, distance.len() / 2);
    let pts: Vec<(f64, f64)> = (lo..hi.max(lo + 2).min(distance.len()))
        .filter(|&i| intensity[i] > 0.0)
        .map(|i| (distance[i].ln(), intensity[i].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(Intensity { drift, gamma, distance, intensity, slope: sxy / sxx })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = kernelProfile)]
pub fn kernel_profile_js(side: usize, spacing: f64, alpha: f64, t: f64) -> Result<String, JsValue> {
    to_js(kernel_profile(side, spacing, alpha, t))
}

#[wasm_bindgen(js_name = dominanceMap)]
pub fn dominance_js(side: usize, spacing: f64, alpha: f64, t: f64) -> Result<String, JsValue> {
    to_js(dominance(side, spacing, alpha, t))
}

#[wasm_bindgen(js_name = subordinationIntensity)]
pub fn subordination_intensity_js(side: usize, drift: f64, gamma: f64) -> Result<String, JsValue> {
    to_js(subordination_intensity(side, drift, gamma))
}
