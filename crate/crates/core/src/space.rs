//! Finite metric measure spaces with ball indexing and volume regularity fits.

use std::collections::{HashMap, VecDeque};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest point count accepted by any builder; dense operators are n x n.
pub const MAX_POINTS: usize = 4096;
pub const MAX_GASKET_LEVEL: usize = 7;
pub const MAX_LATTICE_SIDE: usize = 1024;
pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    LatticeBox,
    Gasket,
    HalfspaceLattice,
    Custom,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeMetric {
    #[default]
    L1,
    L2,
}

/// Builder parameters; unused fields are ignored by the chosen kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceParams {
    pub dim: usize,
    pub side: usize,
    pub level: usize,
    /// Lattice spacing; cell measure is `spacing^dim`.
    pub spacing: f64,
    pub metric: LatticeMetric,
    /// Interior margin override, in metric units.
    pub margin: Option<f64>,
}

impl Default for SpaceParams {
    fn default() -> Self {
        SpaceParams { dim: 1, side: 64, level: 4, spacing: 1.0, metric: LatticeMetric::L1, margin: None }
    }
}

#[derive(Debug)]
struct BallIndex {
    dist: Vec<f64>,
    ids: Vec<usize>,
    /// `cum_mu[k]` is the measure of the `k` nearest points.
    cum_mu: Vec<f64>,
}

/// A finite metric measure space. Balls are open: `B(x,r) = {y : d(x,y) < r}`.
#[derive(Debug)]
pub struct MetricMeasureSpace {
    kind: SpaceKind,
    n: usize,
    dim: usize,
    coords: Vec<f64>,
    dist: Vec<f64>,
    mu: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    boundary: Vec<usize>,
    boundary_dist: Vec<f64>,
    margin: f64,
    spacing: f64,
    volume_dim: f64,
    index: Vec<OnceLock<BallIndex>>,
}

impl Clone for MetricMeasureSpace {
    fn clone(&self) -> Self {
        MetricMeasureSpace {
            kind: self.kind,
            n: self.n,
            dim: self.dim,
            coords: self.coords.clone(),
            dist: self.dist.clone(),
            mu: self.mu.clone(),
            neighbors: self.neighbors.clone(),
            boundary: self.boundary.clone(),
            boundary_dist: self.boundary_dist.clone(),
            margin: self.margin,
            spacing: self.spacing,
            volume_dim: self.volume_dim,
            index: (0..self.n).map(|_| OnceLock::new()).collect(),
        }
    }
}

impl PartialEq for MetricMeasureSpace {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.coords == other.coords
            && self.dist == other.dist
            && self.mu == other.mu
            && self.boundary == other.boundary
            && self.margin == other.margin
    }
}

struct Parts {
    kind: SpaceKind,
    dim: usize,
    coords: Vec<f64>,
    dist: Vec<f64>,
    mu: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    boundary: Vec<usize>,
    margin: Option<f64>,
    default_margin: f64,
    spacing: f64,
    volume_dim: f64,
}

impl MetricMeasureSpace {
    fn from_parts(p: Parts) -> Result<Self> {
        let n = p.mu.len();
        if n == 0 {
            return Err(Error::Construction("space needs at least one point".into()));
        }
        if n > MAX_POINTS {
            return Err(Error::Capacity(format!("{n} points exceed the cap of {MAX_POINTS}")));
        }
        if p.dist.len() != n * n {
            return Err(Error::Construction("distance matrix must be n x n".into()));
        }
        if let Some(i) = p.mu.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Construction(format!("measure must be positive at point {i}")));
        }
        for x in 0..n {
            if p.dist[x * n + x] != 0.0 {
                return Err(Error::Construction(format!("d({x},{x}) must vanish")));
            }
            for y in 0..x {
                let (a, b) = (p.dist[x * n + y], p.dist[y * n + x]);
                if a != b || !(a > 0.0) {
                    return Err(Error::Construction(format!("distance ({x},{y}) must be symmetric and positive")));
                }
            }
        }
        let boundary_dist = (0..n)
            .map(|x| p.boundary.iter().map(|&b| p.dist[x * n + b]).fold(f64::INFINITY, f64::min))
            .collect();
        let margin = p.margin.unwrap_or(p.default_margin);
        if !(margin > 0.0) {
            return Err(Error::Construction("interior margin must be positive".into()));
        }
        Ok(MetricMeasureSpace {
            kind: p.kind,
            n,
            dim: p.dim,
            coords: p.coords,
            dist: p.dist,
            mu: p.mu,
            neighbors: p.neighbors,
            boundary: p.boundary,
            boundary_dist,
            margin,
            spacing: p.spacing,
            volume_dim: p.volume_dim,
            index: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn build(kind: SpaceKind, params: &SpaceParams) -> Result<Self> {
        match kind {
            SpaceKind::LatticeBox => Self::lattice_box(params),
            SpaceKind::Gasket => Self::gasket(params),
            SpaceKind::HalfspaceLattice => Self::halfspace_lattice(params),
            SpaceKind::Custom => Err(Error::Construction(
                "custom spaces are built from a distance matrix or a graph".into(),
            )),
        }
    }

    /// `side^dim` lattice points with spacing `h`, cell measure `h^dim`.
    pub fn lattice_box(params: &SpaceParams) -> Result<Self> {
        let (dim, side, h) = (params.dim, params.side, params.spacing);
        if !(1..=3).contains(&dim) {
            return Err(Error::Capacity(format!("lattice dimension {dim} outside 1..=3")));
        }
        if side < 2 || side > MAX_LATTICE_SIDE {
            return Err(Error::Capacity(format!("lattice side {side} outside 2..={MAX_LATTICE_SIDE}")));
        }
        let n = side.checked_pow(dim as u32).filter(|&n| n <= MAX_POINTS).ok_or_else(|| {
            Error::Capacity(format!("lattice {side}^{dim} exceeds the cap of {MAX_POINTS} points"))
        })?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Construction("spacing must be positive".into()));
        }
        let multi = |mut i: usize| {
            let mut c = [0usize; 3];
            for slot in c.iter_mut().take(dim) {
                *slot = i % side;
                i /= side;
            }
            c
        };
        let mut coords = Vec::with_capacity(n * dim);
        let mut boundary = Vec::new();
        let mut neighbors = vec![Vec::new(); n];
        let stride = |k: usize| side.pow(k as u32);
        for i in 0..n {
            let c = multi(i);
            for &ck in c.iter().take(dim) {
                coords.push(ck as f64 * h);
            }
            if c.iter().take(dim).any(|&ck| ck == 0 || ck == side - 1) {
                boundary.push(i);
            }
            for k in 0..dim {
                if c[k] + 1 < side {
                    neighbors[i].push(i + stride(k));
                    neighbors[i + stride(k)].push(i);
                }
            }
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
        }
        let dist = coordinate_distances(&coords, dim, params.metric);
        Self::from_parts(Parts {
            kind: SpaceKind::LatticeBox,
            dim,
            coords,
            dist,
            mu: vec![h.powi(dim as i32); n],
            neighbors,
            boundary,
            margin: params.margin,
            default_margin: side as f64 * h / 8.0,
            spacing: h,
            volume_dim: dim as f64,
        })
    }

    /// Quarter-plane style lattice `side x side` whose bottom row is a genuine
    /// boundary; the other three sides are truncation boundaries.
    pub fn halfspace_lattice(params: &SpaceParams) -> Result<Self> {
        if params.dim != 2 && params.dim != 1 {
            return Err(Error::Capacity("halfspace lattice is two-dimensional".into()));
        }
        let mut p = params.clone();
        p.dim = 2;
        let mut s = Self::lattice_box(&p)?;
        let side = p.side;
        s.kind = SpaceKind::HalfspaceLattice;
        s.boundary.retain(|&i| {
            let (a, b) = (i % side, i / side);
            a == 0 || a == side - 1 || b == side - 1
        });
        let n = s.n;
        s.boundary_dist = (0..n)
            .map(|x| s.boundary.iter().map(|&b| s.dist[x * n + b]).fold(f64::INFINITY, f64::min))
            .collect();
        Ok(s)
    }

    /// Level-`level` Sierpinski gasket graph with the shortest-path metric.
    /// The two corners away from the origin are truncation boundaries.
    pub fn gasket(params: &SpaceParams) -> Result<Self> {
        let level = params.level;
        if level > MAX_GASKET_LEVEL {
            return Err(Error::Capacity(format!("gasket level {level} exceeds {MAX_GASKET_LEVEL}")));
        }
        let side = 1i64 << level;
        let mut ids: HashMap<(i64, i64), usize> = HashMap::new();
        let mut verts: Vec<(i64, i64)> = Vec::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut id = |v: (i64, i64), verts: &mut Vec<(i64, i64)>| -> usize {
            *ids.entry(v).or_insert_with(|| {
                verts.push(v);
                verts.len() - 1
            })
        };
        let mut stack = vec![(0i64, 0i64, side)];
        while let Some((a, b, s)) = stack.pop() {
            if s == 1 {
                let p = id((a, b), &mut verts);
                let q = id((a + 1, b), &mut verts);
                let r = id((a, b + 1), &mut verts);
                edges.extend([(p, q), (p, r), (q, r)]);
            } else {
                let h = s / 2;
                stack.extend([(a, b, h), (a + h, b, h), (a, b + h, h)]);
            }
        }
        let n = verts.len();
        let mut neighbors = vec![Vec::new(); n];
        for &(p, q) in &edges {
            neighbors[p].push(q);
            neighbors[q].push(p);
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }
        let h = params.spacing;
        let dist = bfs_distances(&neighbors, h);
        let sq3 = 3f64.sqrt() / 2.0;
        let coords = verts
            .iter()
            .flat_map(|&(a, b)| [(a as f64 + 0.5 * b as f64) * h, b as f64 * sq3 * h])
            .collect();
        let boundary = vec![ids[&(side, 0)], ids[&(0, side)]];
        Self::from_parts(Parts {
            kind: SpaceKind::Gasket,
            dim: 2,
            coords,
            dist,
            mu: vec![1.0; n],
            neighbors,
            boundary,
            margin: params.margin,
            default_margin: side as f64 * h / 4.0,
            spacing: h,
            volume_dim: 3f64.ln() / 2f64.ln(),
        })
    }

    /// Space from an explicit distance matrix; no truncation boundary, and the
    /// margin defaults to the diameter.
    pub fn from_distance_matrix(dist: Vec<f64>, mu: Vec<f64>, neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = mu.len();
        let diam = dist.iter().cloned().filter(|d| d.is_finite()).fold(0.0, f64::max);
        let spacing = dist.iter().cloned().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
        let neighbors = if neighbors.is_empty() { vec![Vec::new(); n] } else { neighbors };
        Self::from_parts(Parts {
            kind: SpaceKind::Custom,
            dim: 0,
            coords: Vec::new(),
            dist,
            mu,
            neighbors,
            boundary: Vec::new(),
            margin: None,
            default_margin: if diam > 0.0 { diam } else { 1.0 },
            spacing: if spacing.is_finite() { spacing } else { 1.0 },
            volume_dim: 1.0,
        })
    }

    /// Graph with unit edge lengths; disconnected pairs are at infinite distance.
    pub fn from_graph(n: usize, edges: &[(usize, usize)], mu: Vec<f64>) -> Result<Self> {
        if mu.len() != n || edges.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
            return Err(Error::Construction("graph edges and measure must match n".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }
        let dist = bfs_distances(&neighbors, 1.0);
        Self::from_distance_matrix(dist, mu, neighbors)
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    /// Nominal volume growth exponent of the geometry.
    pub fn volume_dim(&self) -> f64 {
        self.volume_dim
    }
    pub fn margin(&self) -> f64 {
        self.margin
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn total_mass(&self) -> f64 {
        self.mu.iter().sum()
    }
    pub fn coords(&self, x: usize) -> &[f64] {
        &self.coords[x * self.dim..(x + 1) * self.dim]
    }
    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.neighbors[x]
    }
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }
    /// Distance from `x` to the truncation boundary (infinite if there is none).
    pub fn boundary_distance(&self, x: usize) -> f64 {
        self.boundary_dist[x]
    }

    #[inline]
    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.n + y]
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// `B(x,r)` lies inside the space away from the truncation boundary.
    pub fn ball_is_interior(&self, x: usize, r: f64) -> bool {
        r <= self.boundary_dist[x]
    }

    /// Points whose distance to the truncation boundary is at least `margin`.
    pub fn interior_points(&self, margin: f64) -> Vec<usize> {
        (0..self.n).filter(|&x| self.boundary_dist[x] >= margin).collect()
    }

    /// Points interior at the configured margin.
    pub fn interior(&self) -> Vec<usize> {
        self.interior_points(self.margin)
    }

    /// A point closest to the centre of the interior region.
    pub fn center(&self) -> usize {
        (0..self.n)
            .max_by(|&a, &b| self.boundary_dist[a].total_cmp(&self.boundary_dist[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    fn index(&self, x: usize) -> &BallIndex {
        self.index[x].get_or_init(|| {
            let mut order: Vec<usize> = (0..self.n).collect();
            order.sort_by(|&a, &b| self.d(x, a).total_cmp(&self.d(x, b)).then(a.cmp(&b)));
            let dist = order.iter().map(|&y| self.d(x, y)).collect();
            let mut cum_mu = Vec::with_capacity(self.n + 1);
            let mut acc = 0.0;
            cum_mu.push(0.0);
            for &y in &order {
                acc += self.mu[y];
                cum_mu.push(acc);
            }
            BallIndex { dist, ids: order, cum_mu }
        })
    }

    /// `B(x,r)`, nearest points first.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        let idx = self.index(x);
        let k = idx.dist.partition_point(|&d| d < r);
        idx.ids[..k].to_vec()
    }

    /// `V(x,r) = mu(B(x,r))`.
    pub fn volume(&self, x: usize, r: f64) -> f64 {
        let idx = self.index(x);
        idx.cum_mu[idx.dist.partition_point(|&d| d < r)]
    }

    /// Distinct finite positive distances from `x`, ascending.
    pub fn distance_levels(&self, x: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.index(x).dist.iter().cloned().filter(|d| *d > 0.0 && d.is_finite()).collect();
        v.dedup();
        v
    }

    /// CSV rows `id,coords...,mu`.
    pub fn points_csv(&self) -> String {
        let mut s = String::from("id");
        for k in 0..self.dim {
            s.push_str(&format!(",x{k}"));
        }
        s.push_str(",mu\n");
        for x in 0..self.n {
            s.push_str(&x.to_string());
            for c in self.coords(x) {
                s.push_str(&format!(",{c}"));
            }
            s.push_str(&format!(",{}\n", self.mu[x]));
        }
        s
    }

    pub fn volume_report(&self) -> Result<VolumeReport> {
        volume_report(self)
    }

    pub fn chain_check(&self, samples: usize) -> ChainReport {
        chain_check(self, samples, DEFAULT_SEED)
    }
}

fn coordinate_distances(coords: &[f64], dim: usize, metric: LatticeMetric) -> Vec<f64> {
    let n = coords.len() / dim;
    let mut dist = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..x {
            let cx = &coords[x * dim..(x + 1) * dim];
            let cy = &coords[y * dim..(y + 1) * dim];
            let d = match metric {
                LatticeMetric::L1 => cx.iter().zip(cy).map(|(a, b)| (a - b).abs()).sum(),
                LatticeMetric::L2 => cx.iter().zip(cy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            };
            dist[x * n + y] = d;
            dist[y * n + x] = d;
        }
    }
    dist
}

fn bfs_distances(neighbors: &[Vec<usize>], h: f64) -> Vec<f64> {
    let n = neighbors.len();
    let mut dist = vec![f64::INFINITY; n * n];
    let mut hops = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        hops.iter_mut().for_each(|v| *v = usize::MAX);
        hops[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if hops[v] == usize::MAX {
                    hops[v] = hops[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for t in 0..n {
            if hops[t] != usize::MAX {
                dist[s * n + t] = hops[t] as f64 * h;
            }
        }
    }
    dist
}

/// Fitted volume regularity constants over interior balls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    /// `sup V(x,2r)/V(x,r)`.
    pub c_doubling: f64,
    pub l_mu: f64,
    /// `inf V(x,l_mu r)/V(x,r)`.
    pub c_mu: f64,
    pub rvd_holds_on_range: bool,
    pub d1: f64,
    pub d2: f64,
    /// `c_low (R/r)^d1 <= V(x,R)/V(x,r)`.
    pub c_low: f64,
    /// `V(x,R)/V(x,r) <= c_high (R/r)^d2`.
    pub c_high: f64,
    pub radius_range: (f64, f64),
    pub doubling_witness: (usize, f64),
}

fn sample_evenly<T: Copy>(v: &[T], max: usize) -> Vec<T> {
    if v.len() <= max {
        return v.to_vec();
    }
    (0..max).map(|k| v[k * (v.len() - 1) / (max - 1)]).collect()
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn volume_report(s: &MetricMeasureSpace) -> Result<VolumeReport> {
    let interior = s.interior();
    if interior.len() < 2 {
        return Err(Error::Domain("volume report needs at least two interior points".into()));
    }
    let centers = sample_evenly(&interior, 96);
    let r_min = s.spacing;
    let r_max = s.margin;
    let r_max_doubling = if s.boundary.is_empty() { r_max } else { r_max / 2.0 };
    let l_mu = 2.0;

    let mut c_doubling: f64 = 0.0;
    let mut c_mu = f64::INFINITY;
    let mut witness = (centers[0], r_min);
    for &x in &centers {
        let mut radii: Vec<f64> = s
            .distance_levels(x)
            .into_iter()
            .flat_map(|d| [d, 0.5 * d])
            .filter(|&r| r >= r_min * (1.0 - 1e-12) && r <= r_max_doubling * (1.0 + 1e-12))
            .collect();
        radii.push(r_min);
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        for &r0 in &sample_evenly(&radii, 256) {
            for r in [r0, r0 * (1.0 + 1e-9)] {
                if r > r_max_doubling * (1.0 + 1e-9) {
                    continue;
                }
                let v = s.volume(x, r);
                let ratio = s.volume(x, 2.0 * r) / v;
                if ratio > c_doubling {
                    c_doubling = ratio;
                    witness = (x, r);
                }
                c_mu = c_mu.min(s.volume(x, l_mu * r) / v);
            }
        }
    }

    let grid: Vec<f64> = (0..24)
        .map(|k| r_min * (r_max / r_min).powf(k as f64 / 23.0))
        .collect();
    let vols: Vec<Vec<f64>> = centers.iter().map(|&x| grid.iter().map(|&r| s.volume(x, r)).collect()).collect();
    let lr: Vec<f64> = grid.iter().map(|r| r.ln()).collect();
    let vmin: Vec<f64> = (0..grid.len()).map(|k| vols.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min).ln()).collect();
    let vmax: Vec<f64> = (0..grid.len()).map(|k| vols.iter().map(|v| v[k]).fold(0.0, f64::max).ln()).collect();
    let (mut d1, mut d2) = if grid.len() > 1 && r_max > r_min {
        (least_squares_slope(&lr, &vmin), least_squares_slope(&lr, &vmax))
    } else {
        (0.0, 0.0)
    };
    if d1 > d2 {
        std::mem::swap(&mut d1, &mut d2);
    }
    let mut c_low = f64::INFINITY;
    let mut c_high: f64 = 0.0;
    for v in &vols {
        for i in 0..grid.len() {
            for j in i..grid.len() {
                let q = v[j] / v[i];
                let s_ratio = grid[j] / grid[i];
                c_low = c_low.min(q / s_ratio.powf(d1));
                c_high = c_high.max(q / s_ratio.powf(d2));
            }
        }
    }
    Ok(VolumeReport {
        c_doubling,
        l_mu,
        c_mu,
        rvd_holds_on_range: c_mu > 1.0,
        d1,
        d2,
        c_low,
        c_high,
        radius_range: (r_min, r_max),
        doubling_witness: witness,
    })
}

/// Chain constant `C` with witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub constant: f64,
    pub witness: Option<(usize, usize, usize)>,
    pub samples: usize,
}

/// Fewest hops from `x` to `y` using steps of length at most `s`.
fn hop_distance(space: &MetricMeasureSpace, x: usize, y: usize, s: f64, limit: usize) -> Option<usize> {
    let n = space.len();
    let mut hops = vec![usize::MAX; n];
    hops[x] = 0;
    let mut queue = VecDeque::from([x]);
    while let Some(u) = queue.pop_front() {
        if u == y {
            return Some(hops[u]);
        }
        if hops[u] >= limit {
            continue;
        }
        for v in 0..n {
            if hops[v] == usize::MAX && space.d(u, v) <= s {
                hops[v] = hops[u] + 1;
                queue.push_back(v);
            }
        }
    }
    None
}

/// Sampled chain condition: for `(x, y, n)` the smallest possible maximal step
/// of an `n`-step chain from `x` to `y`, divided by `d(x,y)/n`.
pub fn chain_check(space: &MetricMeasureSpace, samples: usize, seed: u64) -> ChainReport {
    let n = space.len();
    for y in 0..n {
        if !space.d(0, y).is_finite() {
            return ChainReport { constant: f64::INFINITY, witness: Some((0, y, 1)), samples: 0 };
        }
    }
    if n < 2 {
        return ChainReport { constant: 1.0, witness: None, samples: 0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (0.0f64, None);
    let min_step = space.spacing;
    for _ in 0..samples {
        let x = rng.gen_range(0..n);
        let mut y = rng.gen_range(0..n - 1);
        if y >= x {
            y += 1;
        }
        let dxy = space.d(x, y);
        let max_n = ((dxy / min_step).floor() as usize).max(1);
        let steps = rng.gen_range(1..=max_n);
        let levels: Vec<f64> = space.distance_levels(x).into_iter().filter(|&d| d <= dxy).collect();
        let mut levels = levels;
        for v in 0..n {
            let d = space.d(y, v);
            if d <= dxy {
                levels.push(d);
            }
        }
        levels.retain(|&d| d > 0.0);
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let (mut lo, mut hi) = (0usize, levels.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if hop_distance(space, x, y, levels[mid], steps).is_some_and(|h| h <= steps) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let c = levels[lo] * steps as f64 / dxy;
        if c > best.0 {
            best = (c, Some((x, y, steps)));
        }
    }
    ChainReport { constant: best.0, witness: best.1, samples }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z1(side: usize) -> MetricMeasureSpace {
        MetricMeasureSpace::lattice_box(&SpaceParams { dim: 1, side, ..Default::default() }).unwrap()
    }

    #[test]
    fn lattice_volumes_match_count() {
        let s = z1(101);
        assert_eq!(s.len(), 101);
        let x = 50;
        for r in [0.5, 1.0, 1.5, 2.5, 7.0, 10.2] {
            // Open balls: count of |k| < r.
            let oracle = (-50i64..=50).filter(|k| (*k as f64).abs() < r).count() as f64;
            assert_eq!(s.volume(x, r), oracle);
        }
        assert_eq!(s.ball(x, 0.5), vec![x]);
        assert_eq!(s.ball(x, 2.5).len(), 5);
        assert_eq!(s.ball(x, 1e9).len(), 101);
    }

    #[test]
    fn gasket_vertex_counts() {
        for level in 0..=5usize {
            let s = MetricMeasureSpace::gasket(&SpaceParams { level, ..Default::default() }).unwrap();
            // Recursion: V(l+1) = 3 V(l) - 3.
            let mut v = 3usize;
            for _ in 0..level {
                v = 3 * v - 3;
            }
            assert_eq!(s.len(), v);
            assert_eq!(s.len(), 3 * (3usize.pow(level as u32) + 1) / 2);
        }
    }

    #[test]
    fn capacity_refused() {
        let err = MetricMeasureSpace::lattice_box(&SpaceParams { dim: 2, side: 100, ..Default::default() });
        assert!(matches!(err, Err(Error::Capacity(_))));
        let err = MetricMeasureSpace::gasket(&SpaceParams { level: 8, ..Default::default() });
        assert!(matches!(err, Err(Error::Capacity(_))));
    }

    #[test]
    fn z1_doubling_at_most_three() {
        let rep = z1(101).volume_report().unwrap();
        assert!(rep.c_doubling <= 3.0 + 1e-12 && rep.c_doubling >= 3.0 - 1e-12);
        assert!(rep.rvd_holds_on_range);
        assert!(rep.d1 <= rep.d2);
    }

    #[test]
    fn two_point_space_has_no_reverse_doubling() {
        let s = MetricMeasureSpace::from_distance_matrix(vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 1.0], vec![]).unwrap();
        let rep = s.volume_report().unwrap();
        assert!(rep.c_mu <= 1.0);
        assert!(!rep.rvd_holds_on_range);
    }

    #[test]
    fn chain_constants() {
        let rep = z1(64).chain_check(60);
        assert!(rep.constant <= 2.0 && rep.constant >= 1.0);
        let g = MetricMeasureSpace::gasket(&SpaceParams { level: 3, ..Default::default() }).unwrap();
        assert!(g.chain_check(30).constant.is_finite());
        let split = MetricMeasureSpace::from_graph(4, &[(0, 1), (2, 3)], vec![1.0; 4]).unwrap();
        let rep = split.chain_check(10);
        assert!(rep.constant.is_infinite());
        assert_eq!(rep.witness, Some((0, 2, 1)));
    }
}
