//! Agmon distance `d_ρ(x₀, ·)` in the conformal metric `ρ⁻¹|dx|`, metric
//! balls, and the geometry checks for critical radius functions.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critical_radius::{CriticalRadiusField, ShenParameters};
use crate::error::{LabError, Result};
use crate::grid::{self, Grid, ScalarField};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// `2d` axis neighbours.
    Axis,
    /// All `3^d − 1` neighbours.
    Full,
}

impl Stencil {
    /// Worst-case ratio of stencil path length to Euclidean length on a
    /// uniform grid.
    pub fn metrication_bound(self, dim: usize) -> f64 {
        match self {
            Stencil::Axis => (dim as f64).sqrt(),
            Stencil::Full => {
                // Path along the unit-vector ladder e, e+f, e+f+g, … with the
                // direction bisecting consecutive stencil vectors.
                let mut s = 1.0;
                for k in 1..dim {
                    let a = (k as f64).sqrt();
                    let b = ((k + 1) as f64).sqrt();
                    s += (b - a) * (b - a);
                }
                s.sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMean {
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum SolverMethod {
    /// First-order upwind fast marching for `|∇u| = ρ⁻¹`.
    FastMarching,
    /// Shortest paths on the grid graph.
    Dijkstra { stencil: Stencil, mean: EdgeMean },
    /// Closed form for a constant `ρ`.
    ConstantMetric,
    /// Prefix integral of `ρ⁻¹` (one dimension only).
    Exact1d,
}

impl Default for SolverMethod {
    fn default() -> Self {
        SolverMethod::FastMarching
    }
}

impl std::str::FromStr for SolverMethod {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fmm" | "fast-marching" => SolverMethod::FastMarching,
            "dijkstra" | "dijkstra-full" => SolverMethod::Dijkstra { stencil: Stencil::Full, mean: EdgeMean::Harmonic },
            "dijkstra-axis" => SolverMethod::Dijkstra { stencil: Stencil::Axis, mean: EdgeMean::Harmonic },
            "dijkstra-arith" => SolverMethod::Dijkstra { stencil: Stencil::Full, mean: EdgeMean::Arithmetic },
            "constant" => SolverMethod::ConstantMetric,
            "exact1d" => SolverMethod::Exact1d,
            other => return Err(LabError::Parse { field: "method".into(), message: format!("unknown solver `{other}`") }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Nodes within this physical distance of the source are initialised
    /// with the straight-segment metric length. Defaults to 1.5 cells.
    pub init_radius: Option<f64>,
    /// Stop once the front passes this distance; farther nodes stay infinite.
    pub cutoff: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { init_radius: None, cutoff: None }
    }
}

/// Single-source distance field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgmonField {
    pub source: Vec<f64>,
    pub source_node: usize,
    pub distances: ScalarField,
    pub method: SolverMethod,
    /// Nodes left at infinity (beyond the cutoff or unreachable).
    pub unreached: usize,
}

/// Threshold set `{y : u(y) < r}` of a distance field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBall {
    pub source: Vec<f64>,
    pub radius: f64,
    pub cells: usize,
    pub volume: f64,
    /// Some member lies on the outer face of the grid.
    pub clipped: bool,
}

impl AgmonField {
    pub fn grid(&self) -> &Grid {
        &self.distances.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.distances.values
    }

    /// Metric ball of radius `r` by whole-cell thresholding.
    pub fn metric_ball(&self, r: f64) -> Result<MetricBall> {
        if !(r > 0.0) {
            return Err(LabError::Config(format!("metric ball radius must be positive, got {r}")));
        }
        let g = self.grid();
        let mut cells = 0;
        let mut clipped = false;
        for (i, &u) in self.values().iter().enumerate() {
            if u < r {
                cells += 1;
                if !clipped && g.on_boundary(i) {
                    clipped = true;
                }
            }
        }
        if clipped {
            log::warn!("metric ball of radius {r} around {:?} touches the domain boundary", self.source);
        }
        Ok(MetricBall { source: self.source.clone(), radius: r, cells, volume: cells as f64 * g.cell_volume(), clipped })
    }

    /// Nodes sorted by distance, for repeated threshold queries.
    pub fn sorted(&self) -> SortedDistances {
        let vals = self.values();
        let mut order: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].is_finite()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let dist: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        let g = self.grid();
        // First position in sorted order of a boundary node.
        let first_boundary = order.iter().position(|&i| g.on_boundary(i)).unwrap_or(order.len());
        SortedDistances { order, dist, first_boundary, cell_volume: g.cell_volume() }
    }
}

/// Nodes of a distance field in increasing distance order.
#[derive(Debug, Clone)]
pub struct SortedDistances {
    pub order: Vec<usize>,
    pub dist: Vec<f64>,
    first_boundary: usize,
    pub cell_volume: f64,
}

impl SortedDistances {
    /// Number of nodes with `u < r`.
    pub fn count_below(&self, r: f64) -> usize {
        self.dist.partition_point(|&u| u < r)
    }

    pub fn volume(&self, r: f64) -> f64 {
        self.count_below(r) as f64 * self.cell_volume
    }

    /// Whether the ball of radius `r` reaches the grid boundary.
    pub fn clipped(&self, r: f64) -> bool {
        self.count_below(r) > self.first_boundary
    }

    /// Largest radius whose ball stays off the boundary.
    pub fn unclipped_radius(&self) -> f64 {
        self.dist.get(self.first_boundary).cloned().unwrap_or(f64::INFINITY)
    }
}

/// Solves for the distance from `source` in the metric `ρ⁻¹|dx|`.
pub fn solve_distance(rho: &CriticalRadiusField, source: &[f64], method: SolverMethod, options: SolveOptions) -> Result<AgmonField> {
    let g = rho.grid();
    if source.len() != g.dim() || !g.contains(source) {
        return Err(LabError::Config(format!("source {source:?} is outside the grid")));
    }
    if let Some((i, &v)) = rho.rho.values.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
        return Err(LabError::Metric { node: i, value: v });
    }
    let slowness: Vec<f64> = rho.rho.values.iter().map(|r| 1.0 / r).collect();
    let src_node = g.nearest(source);
    let (values, unreached) = match method {
        SolverMethod::ConstantMetric => {
            let r0 = rho.rho.values[0];
            if rho.rho.values.iter().any(|&r| (r - r0).abs() > 1e-12 * r0) {
                return Err(LabError::Config("constant-metric solver needs a constant field".into()));
            }
            let mut v = g.map_nodes(|y| grid::dist(y, source) / r0);
            let unreached = apply_cutoff(&mut v, options.cutoff);
            (v, unreached)
        }
        SolverMethod::Exact1d => {
            if g.dim() != 1 {
                return Err(LabError::Dimension { dim: g.dim(), reason: "prefix-integral solver is one-dimensional".into() });
            }
            let h = g.spacing()[0];
            let mut prefix = vec![0.0; g.len()];
            for i in 1..g.len() {
                prefix[i] = prefix[i - 1] + 0.5 * h * (slowness[i - 1] + slowness[i]);
            }
            let inv = |x: f64| 1.0 / rho.rho.interpolate(&[x]);
            // Prefix integral at the source by the trapezoid rule on the partial cell.
            let t = ((source[0] - g.lo()[0]) / h).clamp(0.0, (g.len() - 1) as f64);
            let i0 = (t.floor() as usize).min(g.len().saturating_sub(2));
            let x0 = g.coord(0, i0);
            let p0 = prefix[i0] + 0.5 * (source[0] - x0) * (slowness[i0] + inv(source[0]));
            let mut v: Vec<f64> = prefix.iter().map(|p| (p - p0).abs()).collect();
            let unreached = apply_cutoff(&mut v, options.cutoff);
            (v, unreached)
        }
        SolverMethod::FastMarching | SolverMethod::Dijkstra { .. } => {
            let init_r = options.init_radius.unwrap_or(1.5 * g.max_spacing());
            let init = init_nodes(rho, &slowness, source, src_node, init_r);
            let cutoff = options.cutoff.unwrap_or(f64::INFINITY);
            match method {
                SolverMethod::FastMarching => fast_marching(g, &slowness, &init, cutoff),
                SolverMethod::Dijkstra { stencil, mean } => dijkstra(g, &slowness, &init, stencil, mean, cutoff),
                _ => unreachable!(),
            }
        }
    };
    Ok(AgmonField {
        source: source.to_vec(),
        source_node: src_node,
        distances: ScalarField::new(g.clone(), values)?,
        method,
        unreached,
    })
}

fn apply_cutoff(v: &mut [f64], cutoff: Option<f64>) -> usize {
    let Some(c) = cutoff else { return 0 };
    let mut n = 0;
    for x in v.iter_mut() {
        if *x > c {
            *x = f64::INFINITY;
            n += 1;
        }
    }
    n
}

/// Straight-segment metric length from `source` to each node within
/// `radius` (Simpson's rule on the interpolated slowness).
fn init_nodes(rho: &CriticalRadiusField, slowness: &[f64], source: &[f64], src_node: usize, radius: f64) -> Vec<(usize, f64)> {
    let g = rho.grid();
    let inv = |p: &[f64]| 1.0 / rho.rho.interpolate(p);
    let n0 = inv(source);
    let mut out = Vec::new();
    let mut mid = vec![0.0; g.dim()];
    if let Some((a, b)) = g.index_window(source, radius) {
        g.for_each_in_box(&a, &b, |i, p| {
            let len = grid::dist(p, source);
            if len <= radius {
                for k in 0..p.len() {
                    mid[k] = 0.5 * (p[k] + source[k]);
                }
                let u = len * (n0 + 4.0 * inv(&mid) + slowness[i]) / 6.0;
                out.push((i, u));
            }
        });
    }
    if !out.iter().any(|&(i, _)| i == src_node) {
        let p = g.point(src_node);
        let len = grid::dist(&p, source);
        out.push((src_node, len * 0.5 * (n0 + slowness[src_node])));
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Far,
    Trial,
    Known,
}

fn fast_marching(g: &Grid, slowness: &[f64], init: &[(usize, f64)], cutoff: f64) -> (Vec<f64>, usize) {
    let n = g.len();
    let d = g.dim();
    let h = g.spacing();
    let counts = g.counts();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * counts[k + 1];
    }
    let mut u = vec![f64::INFINITY; n];
    let mut state = vec![State::Far; n];
    let mut fixed = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(i, v) in init {
        u[i] = v;
        fixed[i] = true;
        state[i] = State::Trial;
        heap.push(Reverse((OrderedFloat(v), i)));
    }
    let mut cand: Vec<(f64, f64)> = Vec::with_capacity(d);
    let mut idx = vec![0usize; d];
    let mut nidx = vec![0usize; d];
    while let Some(Reverse((OrderedFloat(v), i))) = heap.pop() {
        if state[i] == State::Known || v > u[i] {
            continue;
        }
        if v > cutoff {
            break;
        }
        state[i] = State::Known;
        decompose(i, counts, &mut idx);
        for k in 0..d {
            for dir in [-1i64, 1] {
                let j = idx[k] as i64 + dir;
                if j < 0 || j >= counts[k] as i64 {
                    continue;
                }
                let nb = if dir < 0 { i - strides[k] } else { i + strides[k] };
                if state[nb] == State::Known || fixed[nb] {
                    continue;
                }
                decompose(nb, counts, &mut nidx);
                cand.clear();
                for a in 0..d {
                    let mut best = f64::INFINITY;
                    if nidx[a] > 0 {
                        let m = nb - strides[a];
                        if state[m] == State::Known {
                            best = best.min(u[m]);
                        }
                    }
                    if nidx[a] + 1 < counts[a] {
                        let m = nb + strides[a];
                        if state[m] == State::Known {
                            best = best.min(u[m]);
                        }
                    }
                    if best.is_finite() {
                        cand.push((best, h[a]));
                    }
                }
                cand.sort_by(|x, y| x.0.total_cmp(&y.0));
                let s = slowness[nb];
                let (mut aa, mut bb, mut cc) = (0.0, 0.0, 0.0);
                let mut sol = f64::INFINITY;
                for &(uk, hk) in &cand {
                    if sol <= uk {
                        break;
                    }
                    let w = 1.0 / (hk * hk);
                    aa += w;
                    bb += uk * w;
                    cc += uk * uk * w;
                    let disc = bb * bb - aa * (cc - s * s);
                    if disc < 0.0 {
                        break;
                    }
                    sol = (bb + disc.sqrt()) / aa;
                }
                if sol < u[nb] {
                    u[nb] = sol;
                    state[nb] = State::Trial;
                    heap.push(Reverse((OrderedFloat(sol), nb)));
                }
            }
        }
    }
    let mut unreached = 0;
    for i in 0..n {
        if state[i] != State::Known {
            u[i] = f64::INFINITY;
            unreached += 1;
        }
    }
    (u, unreached)
}

fn decompose(mut flat: usize, counts: &[usize], out: &mut [usize]) {
    for k in (0..counts.len()).rev() {
        out[k] = flat % counts[k];
        flat /= counts[k];
    }
}

fn dijkstra(g: &Grid, slowness: &[f64], init: &[(usize, f64)], stencil: Stencil, mean: EdgeMean, cutoff: f64) -> (Vec<f64>, usize) {
    let n = g.len();
    let d = g.dim();
    let h = g.spacing();
    let counts = g.counts();
    let mut strides = vec![1i64; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * counts[k + 1] as i64;
    }
    let mut offsets: Vec<(Vec<i64>, i64, f64)> = Vec::new();
    let total = 3usize.pow(d as u32);
    for code in 0..total {
        let mut c = code;
        let mut off = vec![0i64; d];
        for o in off.iter_mut() {
            *o = (c % 3) as i64 - 1;
            c /= 3;
        }
        let nz = off.iter().filter(|&&o| o != 0).count();
        if nz == 0 || (stencil == Stencil::Axis && nz != 1) {
            continue;
        }
        let len = off.iter().zip(h).map(|(&o, &hk)| (o as f64 * hk).powi(2)).sum::<f64>().sqrt();
        let flat = off.iter().zip(&strides).map(|(o, s)| o * s).sum();
        offsets.push((off, flat, len));
    }
    let mut u = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(i, v) in init {
        u[i] = v;
        heap.push(Reverse((OrderedFloat(v), i)));
    }
    let mut idx = vec![0usize; d];
    while let Some(Reverse((OrderedFloat(v), i))) = heap.pop() {
        if done[i] || v > u[i] {
            continue;
        }
        if v > cutoff {
            break;
        }
        done[i] = true;
        decompose(i, counts, &mut idx);
        'nb: for (off, flat, len) in &offsets {
            for k in 0..d {
                let j = idx[k] as i64 + off[k];
                if j < 0 || j >= counts[k] as i64 {
                    continue 'nb;
                }
            }
            let nb = (i as i64 + flat) as usize;
            if done[nb] {
                continue;
            }
            let (a, b) = (slowness[i], slowness[nb]);
            let m = match mean {
                EdgeMean::Arithmetic => 0.5 * (a + b),
                EdgeMean::Harmonic => 2.0 * a * b / (a + b),
            };
            let cand = v + len * m;
            if cand < u[nb] {
                u[nb] = cand;
                heap.push(Reverse((OrderedFloat(cand), nb)));
            }
        }
    }
    let mut unreached = 0;
    for i in 0..n {
        if !done[i] {
            u[i] = f64::INFINITY;
            unreached += 1;
        }
    }
    (u, unreached)
}

/// A critical radius field together with the solver used for its metric.
#[derive(Debug, Clone)]
pub struct DistanceProvider {
    pub rho: CriticalRadiusField,
    pub method: SolverMethod,
    pub options: SolveOptions,
}

impl DistanceProvider {
    pub fn new(rho: CriticalRadiusField, method: SolverMethod) -> Self {
        Self { rho, method, options: SolveOptions::default() }
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn solve(&self, source: &[f64]) -> Result<AgmonField> {
        solve_distance(&self.rho, source, self.method, self.options)
    }

    pub fn solve_with_cutoff(&self, source: &[f64], cutoff: f64) -> Result<AgmonField> {
        let mut o = self.options;
        o.cutoff = Some(cutoff);
        solve_distance(&self.rho, source, self.method, o)
    }
}

/// Count of axis-neighbour pairs violating
/// `|u(a) − u(b)| ≤ h · max(ρ⁻¹(a), ρ⁻¹(b)) · (1 + slack)`.
pub fn lipschitz_violations(field: &AgmonField, rho: &CriticalRadiusField, slack: f64) -> usize {
    let g = field.grid();
    let u = field.values();
    let mut nb = Vec::new();
    let mut count = 0;
    for i in 0..g.len() {
        if !u[i].is_finite() {
            continue;
        }
        g.axis_neighbors(i, &mut nb);
        for &j in &nb {
            if j < i || !u[j].is_finite() {
                continue;
            }
            let h = grid::dist(&g.point(i), &g.point(j));
            let bound = h * (1.0 / rho.rho.values[i]).max(1.0 / rho.rho.values[j]) * (1.0 + slack);
            if (u[i] - u[j]).abs() > bound {
                count += 1;
            }
        }
    }
    count
}

/// Source nodes with their sampled target nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub groups: Vec<(usize, Vec<usize>)>,
}

impl PairSample {
    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.1.len()).sum()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Nodes at least `margin` away from the boundary.
pub fn interior_nodes(g: &Grid, margin: f64) -> Vec<usize> {
    let mut p = vec![0.0; g.dim()];
    (0..g.len())
        .filter(|&i| {
            g.point_into(i, &mut p);
            g.distance_to_boundary(&p) >= margin
        })
        .collect()
}

/// `sources` interior nodes, each with `per_source` targets drawn from the
/// interior nodes satisfying `accept(x, y)`.
pub fn sample_pairs<A>(g: &Grid, margin: f64, sources: usize, per_source: usize, seed: u64, accept: A) -> Result<PairSample>
where
    A: Fn(usize, usize) -> bool,
{
    let interior = interior_nodes(g, margin);
    if interior.len() < 2 {
        return Err(LabError::Config(format!("margin {margin} leaves fewer than two interior nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::with_capacity(sources);
    for _ in 0..sources {
        let s = interior[rng.gen_range(0..interior.len())];
        let admissible: Vec<usize> = interior.iter().cloned().filter(|&t| t != s && accept(s, t)).collect();
        if admissible.is_empty() {
            continue;
        }
        let targets = (0..per_source).map(|_| admissible[rng.gen_range(0..admissible.len())]).collect();
        groups.push((s, targets));
    }
    Ok(PairSample { groups })
}

fn solve_sources(provider: &DistanceProvider, sample: &PairSample, cutoff: Option<f64>) -> Result<Vec<AgmonField>> {
    let g = provider.grid();
    par::try_map_range(sample.groups.len(), |k| {
        let src = g.point(sample.groups[k].0);
        match cutoff {
            Some(c) => provider.solve_with_cutoff(&src, c),
            None => provider.solve(&src),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub euclid: f64,
    pub rho_x: f64,
    pub distance: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub property: String,
    pub constant: f64,
    pub cap: f64,
    pub samples: usize,
    pub skipped: usize,
    pub violations: Vec<PairRecord>,
    pub worst: Option<PairRecord>,
}

impl ConstantFit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.constant.is_finite() && self.samples > 0
    }
}

/// Smallest `D₀` with `D₀⁻¹|x−y|/ρ(x) ≤ d_ρ(x,y) ≤ D₀|x−y|/ρ(x)` over pairs
/// with `|x−y| ≤ 2ρ(x)`. Pairs outside that range are a precondition error.
pub fn check_local_comparability(provider: &DistanceProvider, sample: &PairSample, cap: f64) -> Result<ConstantFit> {
    let g = provider.grid();
    let rho = &provider.rho.rho.values;
    for (s, ts) in &sample.groups {
        for &t in ts {
            if grid::dist(&g.point(*s), &g.point(t)) > 2.0 * rho[*s] * (1.0 + 1e-12) {
                return Err(LabError::Precondition(format!("pair {:?} -> {:?} is farther than 2ρ(x)", g.point(*s), g.point(t))));
            }
        }
    }
    let fields = solve_sources(provider, sample, None)?;
    let mut records = Vec::new();
    for ((s, ts), f) in sample.groups.iter().zip(&fields) {
        let x = g.point(*s);
        for &t in ts {
            let y = g.point(t);
            let e = grid::dist(&x, &y);
            let dist = f.values()[t];
            let ratio = dist * rho[*s] / e;
            records.push(PairRecord { x: x.clone(), y, euclid: e, rho_x: rho[*s], distance: dist, required: ratio.max(1.0 / ratio) });
        }
    }
    Ok(finish_fit("local-comparability", records, cap, 0))
}

fn finish_fit(property: &str, records: Vec<PairRecord>, cap: f64, skipped: usize) -> ConstantFit {
    let worst = records.iter().max_by(|a, b| a.required.total_cmp(&b.required)).cloned();
    let constant = worst.as_ref().map_or(1.0, |w| w.required.max(1.0));
    let violations: Vec<PairRecord> = records.iter().filter(|r| !(r.required <= cap)).cloned().collect();
    ConstantFit { property: property.into(), constant, cap, samples: records.len(), skipped, violations, worst }
}

/// Smallest `D₁` with `d_ρ ≤ D₁(1+t)^{k₀+1}` at every pair and
/// `d_ρ ≥ D₁⁻¹(1+t)^{1/(k₀+1)}` at pairs with `t = |x−y|/ρ(x) ≥ 1`.
pub fn check_global_bounds(provider: &DistanceProvider, k0: f64, sample: &PairSample, cap: f64) -> Result<ConstantFit> {
    let g = provider.grid();
    let rho = &provider.rho.rho.values;
    let fields = solve_sources(provider, sample, None)?;
    let mut records = Vec::new();
    let mut skipped_lower = 0;
    for ((s, ts), f) in sample.groups.iter().zip(&fields) {
        let x = g.point(*s);
        for &t in ts {
            let y = g.point(t);
            let e = grid::dist(&x, &y);
            let tt = e / rho[*s];
            let dist = f.values()[t];
            let mut req = dist / (1.0 + tt).powf(k0 + 1.0);
            if tt >= 1.0 {
                req = req.max((1.0 + tt).powf(1.0 / (k0 + 1.0)) / dist);
            } else {
                skipped_lower += 1;
            }
            records.push(PairRecord { x: x.clone(), y, euclid: e, rho_x: rho[*s], distance: dist, required: req });
        }
    }
    Ok(finish_fit("global-bounds", records, cap, skipped_lower))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionCase {
    pub center: Vec<f64>,
    /// Radius in units of `ρ(x)` for the Euclidean-inside-metric check and
    /// metric radius for the metric-inside-Euclidean check.
    pub r: f64,
    /// Nodes of `B(x, rρ(x))` (shrunk by one cell layer) outside the metric ball.
    pub euclid_in_metric_violations: usize,
    /// Nodes of `B_ρ(x, r)` outside the Euclidean ball (grown by one layer).
    pub metric_in_euclid_violations: usize,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub beta: f64,
    pub a0: f64,
    pub k0: f64,
    pub cases: Vec<InclusionCase>,
}

impl InclusionReport {
    pub fn violations(&self) -> usize {
        self.cases.iter().map(|c| c.euclid_in_metric_violations + c.metric_in_euclid_violations).sum()
    }
    pub fn checked(&self) -> usize {
        self.cases.iter().filter(|c| !c.skipped).count()
    }
}

/// Euclidean radius (in units of `ρ(x)`) of the metric ball `B_ρ(x, r)` bound.
pub fn metric_ball_euclid_bound(r: f64, p: &ShenParameters) -> f64 {
    if r <= p.beta {
        p.a0 * r
    } else {
        (r * p.beta).powf(p.k0 + 1.0) - 1.0
    }
}

/// Metric radius containing `B(x, rρ(x))`.
pub fn euclid_ball_metric_bound(r: f64, p: &ShenParameters) -> f64 {
    if r <= 2.0 {
        p.beta * r
    } else {
        p.beta * (1.0 + r).powf(p.k0 + 1.0)
    }
}

/// Cell-by-cell check of both ball inclusions at every `(center, r)`.
/// Cases whose test region leaves the grid are marked skipped.
pub fn check_ball_inclusions(provider: &DistanceProvider, params: &ShenParameters, centers: &[usize], radii: &[f64]) -> Result<InclusionReport> {
    let g = provider.grid();
    let rho = &provider.rho.rho.values;
    let layer = grid::norm(g.spacing());
    let cases = par::try_map_range(centers.len(), |k| -> Result<Vec<InclusionCase>> {
        let c = centers[k];
        let x = g.point(c);
        let f = provider.solve(&x)?;
        let u = f.values();
        let rx = rho[c];
        let room = g.distance_to_boundary(&x);
        let mut out = Vec::new();
        for &r in radii {
            let euclid_r = r * rx;
            let metric_outer = euclid_ball_metric_bound(r, params);
            let outer_e = metric_ball_euclid_bound(r, params) * rx + layer;
            // Metric ball must not be clipped for the second check.
            let metric_clipped = (0..g.len()).any(|i| u[i] < r && g.on_boundary(i));
            let skipped = euclid_r > room || metric_clipped;
            let mut v1 = 0;
            let mut v2 = 0;
            if !skipped {
                let mut p = vec![0.0; g.dim()];
                for i in 0..g.len() {
                    g.point_into(i, &mut p);
                    let e = grid::dist(&p, &x);
                    if e < euclid_r - layer && !(u[i] < metric_outer) {
                        v1 += 1;
                    }
                    if u[i] < r && !(e < outer_e) {
                        v2 += 1;
                    }
                }
            }
            out.push(InclusionCase { center: x.clone(), r, euclid_in_metric_violations: v1, metric_in_euclid_violations: v2, skipped });
        }
        Ok(out)
    })?;
    Ok(InclusionReport { beta: params.beta, a0: params.a0, k0: params.k0, cases: cases.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingRow {
    pub r: f64,
    pub volume_r: f64,
    pub volume_2r: f64,
    pub ratio: f64,
    /// `(1 + r)^{(k₀+1)d}`.
    pub bound: f64,
    pub normalized: f64,
    /// Both balls are the single source cell.
    pub guard: bool,
    pub clipped: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub source: Vec<f64>,
    pub k0: f64,
    pub rows: Vec<DoublingRow>,
    /// Largest normalized ratio over unclipped rows.
    pub constant: f64,
}

impl DoublingReport {
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }
}

/// `|B_ρ(x,2r)| / |B_ρ(x,r)|` against `(1+r)^{(k₀+1)d}`; a row is flagged when
/// its normalized ratio exceeds ten times the running maximum.
pub fn doubling_report(field: &AgmonField, k0: f64, radii: &[f64]) -> DoublingReport {
    let s = field.sorted();
    let d = field.grid().dim() as f64;
    let mut rows = Vec::new();
    let mut running = 0.0f64;
    let mut constant = 0.0f64;
    for &r in radii {
        let n1 = s.count_below(r).max(1);
        let n2 = s.count_below(2.0 * r).max(1);
        let clipped = s.clipped(2.0 * r);
        let ratio = n2 as f64 / n1 as f64;
        let bound = (1.0 + r).powf((k0 + 1.0) * d);
        let normalized = ratio / bound;
        let guard = n2 == 1;
        let flagged = !clipped && running > 0.0 && normalized > 10.0 * running;
        if !clipped {
            running = running.max(normalized);
            constant = constant.max(normalized);
        }
        rows.push(DoublingRow {
            r,
            volume_r: n1 as f64 * s.cell_volume,
            volume_2r: n2 as f64 * s.cell_volume,
            ratio,
            bound,
            normalized,
            guard,
            clipped,
            flagged,
        });
    }
    DoublingReport { source: field.source.clone(), k0, rows, constant }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub points: Vec<Vec<f64>>,
    pub sigmas: Vec<f64>,
    /// Largest overlap count at each `σ`, over nodes at least `margin` inside.
    pub max_overlap: Vec<usize>,
    pub c: f64,
    pub n1: f64,
    pub all_covered: bool,
    pub margin: f64,
}

/// Greedy cover by critical balls `B(x_j, ρ(x_j))` and overlap counts of the
/// dilated balls `B(x_j, σρ(x_j))`, with the fit `max overlap ≤ C σ^{N₁}`.
pub fn critical_cover(rho: &CriticalRadiusField, sigmas: &[f64], margin: f64) -> Result<CoverReport> {
    let g = rho.grid();
    let vals = &rho.rho.values;
    let mut covered = vec![false; g.len()];
    let mut centers: Vec<usize> = Vec::new();
    for i in 0..g.len() {
        if covered[i] {
            continue;
        }
        centers.push(i);
        let x = g.point(i);
        for j in g.nodes_in_ball(&x, vals[i]) {
            covered[j] = true;
        }
        covered[i] = true;
    }
    let all_covered = covered.iter().all(|&c| c);
    let interior: Vec<bool> = {
        let mut p = vec![0.0; g.dim()];
        (0..g.len())
            .map(|i| {
                g.point_into(i, &mut p);
                g.distance_to_boundary(&p) >= margin
            })
            .collect()
    };
    let points: Vec<Vec<f64>> = centers.iter().map(|&c| g.point(c)).collect();
    let max_overlap: Vec<usize> = sigmas
        .iter()
        .map(|&s| {
            let mut count = vec![0u32; g.len()];
            for (k, &c) in centers.iter().enumerate() {
                for j in g.nodes_in_ball(&points[k], s * vals[c]) {
                    count[j] += 1;
                }
            }
            count.iter().zip(&interior).filter(|(_, &ok)| ok).map(|(&c, _)| c as usize).max().unwrap_or(0)
        })
        .collect();
    let (c, n1) = fit_power_law(sigmas, &max_overlap);
    Ok(CoverReport { points, sigmas: sigmas.to_vec(), max_overlap, c, n1, all_covered, margin })
}

/// Least-squares slope of `ln y` on `ln σ`, then the smallest `C` with
/// `y ≤ C σ^{N₁}` at every sample.
fn fit_power_law(sigmas: &[f64], ys: &[usize]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = sigmas.iter().zip(ys).filter(|(_, &y)| y > 0).map(|(&s, &y)| (s.ln(), (y as f64).ln())).collect();
    if pts.len() < 2 {
        return (ys.iter().cloned().max().unwrap_or(0) as f64, 0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let c = pts.iter().map(|p| (p.1 - slope * p.0).exp()).fold(0.0, f64::max);
    (c, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrication_bounds() {
        assert!((Stencil::Full.metrication_bound(2) - (4.0 - 2.0 * 2f64.sqrt()).sqrt()).abs() < 1e-12);
        assert!((Stencil::Full.metrication_bound(3) - 1.1281).abs() < 1e-4);
        assert!((Stencil::Axis.metrication_bound(3) - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(Stencil::Full.metrication_bound(1), 1.0);
    }

    #[test]
    fn constant_metric_is_euclidean() {
        let g = Grid::cube(2, -2.0, 2.0, 0.05).unwrap();
        let rho = CriticalRadiusField::from_fn(&g, |_| 0.5).unwrap();
        let opts = SolveOptions { init_radius: Some(0.5), cutoff: None };
        let f = solve_distance(&rho, &[0.0, 0.0], SolverMethod::FastMarching, opts).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let p = g.point(i);
            let e = grid::norm(&p) / 0.5;
            if e > 0.0 {
                worst = worst.max((f.values()[i] - e).abs() / e);
            }
        }
        assert!(worst < 0.05, "{worst}");
        assert_eq!(f.values()[f.source_node], 0.0);
        assert_eq!(lipschitz_violations(&f, &rho, 1e-9), 0);
    }

    #[test]
    fn both_solvers_match_the_radial_oracle() {
        let g = Grid::cube(2, -2.0, 2.0, 0.025).unwrap();
        let rho = CriticalRadiusField::from_fn(&g, |x| 1.0 / (1.0 + grid::norm(x))).unwrap();
        let opts = SolveOptions { init_radius: Some(0.3), cutoff: None };
        let fm = solve_distance(&rho, &[0.0, 0.0], SolverMethod::FastMarching, opts).unwrap();
        let dj = solve_distance(&rho, &[0.0, 0.0], SolverMethod::Dijkstra { stencil: Stencil::Full, mean: EdgeMean::Harmonic }, opts).unwrap();
        let bound = Stencil::Full.metrication_bound(2);
        for i in 0..g.len() {
            let r = grid::norm(&g.point(i));
            if r == 0.0 {
                continue;
            }
            let exact = r + 0.5 * r * r;
            let (a, b) = (fm.values()[i], dj.values()[i]);
            assert!((a - exact).abs() <= 0.05 * exact, "{a} {exact}");
            assert!(b <= exact * bound * 1.001 && b >= exact * 0.999, "{b} {exact}");
        }
    }

    #[test]
    fn metric_ball_volumes_are_monotone() {
        let g = Grid::cube(2, -3.0, 3.0, 0.1).unwrap();
        let rho = CriticalRadiusField::from_fn(&g, |_| 1.0).unwrap();
        let f = solve_distance(&rho, &[0.0, 0.0], SolverMethod::ConstantMetric, SolveOptions::default()).unwrap();
        let tiny = f.metric_ball(0.01).unwrap();
        assert_eq!(tiny.cells, 1);
        let mut prev = 0.0;
        for r in [1.05, 1.55, 2.05] {
            let b = f.metric_ball(r).unwrap();
            assert!(b.volume >= prev);
            prev = b.volume;
            assert!((b.volume - std::f64::consts::PI * r * r).abs() / (std::f64::consts::PI * r * r) < 0.05);
        }
        assert!(f.metric_ball(0.0).is_err());
        assert!(f.metric_ball(3.5).unwrap().clipped);
    }

    #[test]
    fn exact_1d_matches_antiderivative() {
        let g = Grid::cube(1, -5.0, 5.0, 0.01).unwrap();
        let rho = CriticalRadiusField::from_fn(&g, |x| 1.0 / (1.0 + x[0].abs())).unwrap();
        let f = solve_distance(&rho, &[1.0], SolverMethod::Exact1d, SolveOptions::default()).unwrap();
        let anti = |x: f64| x.signum() * (x.abs() + 0.5 * x * x);
        for i in (0..g.len()).step_by(37) {
            let y = g.coord(0, i);
            assert!((f.values()[i] - (anti(y) - anti(1.0)).abs()).abs() < 1e-4);
        }
    }

    #[test]
    fn nonpositive_rho_is_rejected() {
        let g = Grid::cube(2, -1.0, 1.0, 0.5).unwrap();
        let field = ScalarField::from_fn(&g, |x| x[0]);
        assert!(matches!(CriticalRadiusField::from_field(field), Err(LabError::Metric { .. })));
    }
}
