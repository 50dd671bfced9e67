//! Output files: canonical JSON report, CSV tables, SVG figures and the kernel binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::envelopes::{DominanceMap, Region};
use crate::error::{Error, Result};
use crate::harnack::CylinderResult;
use crate::report::RatioTable;
use crate::suite::{Artifact, SuiteRun};

/// JSON with object keys sorted, so equal values give equal bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value stores objects in a BTreeMap.
    let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
}

/// Creates `dir` and confirms a file can be written there.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".heatlab-write-test");
    fs::write(&probe, b"").map_err(io)?;
    fs::remove_file(&probe).map_err(io)
}

fn file_safe(key: &str) -> String {
    key.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

fn write(dir: &Path, name: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

/// Writes every output of a run into `dir`; returns the paths written.
pub fn write_run(run: &SuiteRun, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_writable(dir)?;
    let mut written = Vec::new();
    write(dir, "report.json", canonical_json(&run.report)?.as_bytes(), &mut written)?;
    write(dir, "points.csv", run.experiment.space().points_csv().as_bytes(), &mut written)?;
    for out in &run.outputs {
        let key = file_safe(&out.key);
        if !out.table.is_empty() {
            write(dir, &format!("{key}.csv"), out.table.to_csv().as_bytes(), &mut written)?;
        }
        match &out.artifact {
            Some(Artifact::Dominance(map)) => {
                write(dir, &format!("{key}_regions.svg"), dominance_svg(map).as_bytes(), &mut written)?;
            }
            Some(Artifact::Envelope(_)) => {
                if let Some(svg) = envelope_ratio_svg(&out.key, &out.table) {
                    write(dir, &format!("{key}_ratios.svg"), svg.as_bytes(), &mut written)?;
                }
            }
            Some(Artifact::Cylinders(cyls)) => {
                if let Some(worst) = cyls.iter().max_by(|a, b| a.c6.total_cmp(&b.c6)) {
                    write(dir, &format!("{key}_worst_field.svg"), caloric_svg(worst).as_bytes(), &mut written)?;
                }
            }
            None => {}
        }
    }
    if let Some(k) = run.experiment.kernel_if_ready() {
        write(dir, "kernel.bin", &k.to_binary(), &mut written)?;
    }
    Ok(written)
}

const STYLE: &str = "<style>.diagonal{fill:#4c72b0}.gaussian{fill:#55a868}.jump{fill:#c44e52}\
.axis{stroke:#333;stroke-width:1;fill:none}.upper{stroke:#c44e52;fill:none;stroke-width:1.5}\
.lower{stroke:#4c72b0;fill:none;stroke-width:1.5}text{font:11px sans-serif}</style>";

fn region_class(r: Region) -> &'static str {
    match r {
        Region::Diagonal => "diagonal",
        Region::Gaussian => "gaussian",
        Region::Jump => "jump",
    }
}

/// Region labels as an `n x n` heatmap; each row is drawn as run-length rects.
pub fn dominance_svg(map: &DominanceMap) -> String {
    let n = map.n;
    let cell = (512.0 / n.max(1) as f64).max(0.25);
    let size = cell * n as f64;
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">{STYLE}",
        w = size + 120.0,
        h = size + 30.0
    );
    let _ = write!(s, "<text x=\"4\" y=\"14\">dominant branch at t = {}</text><g transform=\"translate(0,20)\">", map.t);
    for x in 0..n {
        let row = &map.labels[x * n..(x + 1) * n];
        let mut start = 0;
        while start < n {
            let r = row[start];
            let mut end = start + 1;
            while end < n && row[end] == r {
                end += 1;
            }
            let _ = write!(
                s,
                "<rect class=\"{}\" x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\"/>",
                region_class(r),
                start as f64 * cell,
                x as f64 * cell,
                (end - start) as f64 * cell,
                cell
            );
            start = end;
        }
    }
    for (i, r) in [Region::Diagonal, Region::Gaussian, Region::Jump].into_iter().enumerate() {
        let y = 10.0 + 20.0 * i as f64;
        let _ = write!(
            s,
            "<rect class=\"{c}\" x=\"{x}\" y=\"{y}\" width=\"12\" height=\"12\"/><text x=\"{tx}\" y=\"{ty}\">{c}</text>",
            c = region_class(r),
            x = size + 10.0,
            tx = size + 28.0,
            ty = y + 10.0
        );
    }
    s.push_str("</g></svg>\n");
    s
}

/// Log-log polylines; non-positive points are dropped.
pub fn line_plot_svg(title: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let (w, h, m) = (480.0, 320.0, 50.0);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">{STYLE}");
    let _ = write!(s, "<text x=\"{m}\" y=\"16\">{title}</text>");
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let bound = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bound(|p| p.0);
    let (y0, y1) = bound(|p| p.1);
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let _ = write!(s, "<rect class=\"axis\" x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\"/>", w - 2.0 * m, h - 2.0 * m);
    let _ = write!(s, "<text x=\"{m}\" y=\"{}\">log10 t: {x0:.2} .. {x1:.2}</text>", h - 20.0);
    let _ = write!(s, "<text x=\"4\" y=\"{}\">{y1:.2}</text><text x=\"4\" y=\"{}\">{y0:.2}</text>", m + 4.0, h - m);
    for (name, p) in series {
        let coords: Vec<String> = p
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(x.log10()), py(y.log10())))
            .collect();
        let _ = write!(s, "<polyline class=\"{name}\" points=\"{}\"/>", coords.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

/// Per time: largest `p/upper` and smallest `p/lower` over the fitted triples.
pub fn envelope_ratio_svg(key: &str, table: &RatioTable) -> Option<String> {
    let col = |name: &str| table.columns.iter().position(|c| c == name);
    let (ti, ui, li) = (col("t")?, col("ratio_upper")?, col("ratio_lower")?);
    let mut per_t: Vec<(f64, f64, f64)> = Vec::new();
    for r in &table.rows {
        match per_t.iter_mut().find(|e| e.0 == r[ti]) {
            Some(e) => {
                e.1 = e.1.max(r[ui]);
                e.2 = e.2.min(r[li]);
            }
            None => per_t.push((r[ti], r[ui], r[li])),
        }
    }
    per_t.sort_by(|a, b| a.0.total_cmp(&b.0));
    let upper = per_t.iter().map(|e| (e.0, e.1)).collect();
    let lower = per_t.iter().map(|e| (e.0, e.2)).collect();
    Some(line_plot_svg(&format!("{key}: kernel / envelope"), &[("upper", upper), ("lower", lower)]))
}

/// The worst caloric function as a time × point heatmap, normalized to its maximum.
pub fn caloric_svg(res: &CylinderResult) -> String {
    let rows = &res.worst_field;
    let stride = (rows.len() / 256).max(1);
    let kept: Vec<&Vec<f64>> = rows.iter().step_by(stride).collect();
    let cols = kept.first().map_or(0, |r| r.len());
    let max = kept.iter().flat_map(|r| r.iter()).fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let cw = (480.0 / cols.max(1) as f64).max(1.0);
    let ch = (320.0 / kept.len().max(1) as f64).max(1.0);
    let (w, h) = (cw * cols as f64, ch * kept.len() as f64);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">{STYLE}<text x=\"4\" y=\"14\">C6 = {:.4} at x0 = {}, R = {} (time runs down)</text><g transform=\"translate(0,20)\">",
        w,
        h + 24.0,
        res.c6,
        res.cylinder.x0,
        res.cylinder.r
    );
    for (i, r) in kept.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            let shade = (255.0 * (1.0 - (v / max).clamp(0.0, 1.0))).round() as u8;
            let _ = write!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb(255,{shade},{shade})\"/>",
                j as f64 * cw,
                i as f64 * ch,
                cw,
                ch
            );
        }
    }
    s.push_str("</g></svg>\n");
    s
}
