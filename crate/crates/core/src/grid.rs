//! Node-centred tensor grids, scalar fields on them, ball quadrature and
//! reproducible ball families.
//!
//! Node `i` on axis `k` sits at `lo[k] + i * h[k]` and owns the cell of side
//! `h[k]` centred on it, so every node carries weight `Π h[k]` in cell sums.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::par;

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    let df = d as f64;
    std::f64::consts::PI.powf(df / 2.0) / statrs::function::gamma::gamma(df / 2.0 + 1.0)
}

/// Euclidean distance.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: Vec<f64>,
    n: Vec<usize>,
}

impl Grid {
    /// Builds a grid; the per-axis step is adjusted so that the nodes land
    /// exactly on both ends of every interval.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || hi.len() != dim || h.len() != dim {
            return Err(LabError::Config("grid bounds and spacing must share a nonzero dimension".into()));
        }
        let mut n = Vec::with_capacity(dim);
        let mut step = Vec::with_capacity(dim);
        for k in 0..dim {
            if !(h[k] > 0.0) || !h[k].is_finite() {
                return Err(LabError::Config(format!("spacing on axis {k} must be positive, got {}", h[k])));
            }
            if !(hi[k] > lo[k]) {
                return Err(LabError::Config(format!("axis {k}: upper bound {} not above lower bound {}", hi[k], lo[k])));
            }
            let cells = ((hi[k] - lo[k]) / h[k]).round().max(1.0) as usize;
            n.push(cells + 1);
            step.push((hi[k] - lo[k]) / cells as f64);
        }
        Ok(Self { dim, lo, hi, h: step, n })
    }

    /// Cube `[lo, hi]^dim` with step `h`.
    pub fn cube(dim: usize, lo: f64, hi: f64, h: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![h; dim])
    }

    /// Cube `[lo, hi]^dim` with `points` nodes per axis.
    pub fn cube_points(dim: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(LabError::Config("need at least two points per axis".into()));
        }
        Self::cube(dim, lo, hi, (hi - lo) / (points - 1) as f64)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
    pub fn spacing(&self) -> &[f64] {
        &self.h
    }
    pub fn counts(&self) -> &[usize] {
        &self.n
    }
    /// Smallest step over all axes.
    pub fn min_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    /// Largest step over all axes.
    pub fn max_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }
    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        dist(&self.lo, &self.hi)
    }

    /// Same box with every step divided by `factor`.
    pub fn refined(&self, factor: f64) -> Result<Self> {
        Self::new(self.lo.clone(), self.hi.clone(), self.h.iter().map(|h| h / factor).collect())
    }

    /// Row-major flat index (last axis fastest).
    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            idx[k] = flat % self.n[k];
            flat /= self.n[k];
        }
        idx
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.h[axis]
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi(flat).iter().enumerate().map(|(k, &i)| self.coord(k, i)).collect()
    }

    /// Writes the coordinates of node `flat` into `out`.
    pub fn point_into(&self, mut flat: usize, out: &mut [f64]) {
        for k in (0..self.dim).rev() {
            let i = flat % self.n[k];
            flat /= self.n[k];
            out[k] = self.coord(k, i);
        }
    }

    /// Whether `p` lies in the closed box.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim && p.iter().enumerate().all(|(k, &x)| x >= self.lo[k] && x <= self.hi[k])
    }

    /// Nearest node, clamped to the box.
    pub fn nearest(&self, p: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim)
            .map(|k| {
                let t = ((p[k] - self.lo[k]) / self.h[k]).round();
                t.clamp(0.0, (self.n[k] - 1) as f64) as usize
            })
            .collect();
        self.flat(&idx)
    }

    /// Whether node `flat` lies on the outer face of the box.
    pub fn on_boundary(&self, flat: usize) -> bool {
        self.multi(flat).iter().zip(&self.n).any(|(&i, &n)| i == 0 || i + 1 == n)
    }

    /// Distance from `p` to the complement of the box.
    pub fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        (0..self.dim)
            .map(|k| (p[k] - self.lo[k]).min(self.hi[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Flat indices of the axis neighbours of `flat`.
    pub fn axis_neighbors(&self, flat: usize, out: &mut Vec<usize>) {
        out.clear();
        let idx = self.multi(flat);
        let mut stride = 1;
        for k in (0..self.dim).rev() {
            if idx[k] > 0 {
                out.push(flat - stride);
            }
            if idx[k] + 1 < self.n[k] {
                out.push(flat + stride);
            }
            stride *= self.n[k];
        }
    }

    /// Visits every node whose multi-index lies in `[lo_idx, hi_idx]`.
    pub fn for_each_in_box<F: FnMut(usize, &[f64])>(&self, lo_idx: &[usize], hi_idx: &[usize], mut f: F) {
        let d = self.dim;
        if (0..d).any(|k| lo_idx[k] > hi_idx[k]) {
            return;
        }
        let mut idx = lo_idx.to_vec();
        let mut p: Vec<f64> = (0..d).map(|k| self.coord(k, idx[k])).collect();
        loop {
            f(self.flat(&idx), &p);
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if idx[k] < hi_idx[k] {
                    idx[k] += 1;
                    p[k] = self.coord(k, idx[k]);
                    break;
                }
                idx[k] = lo_idx[k];
                p[k] = self.coord(k, idx[k]);
            }
        }
    }

    /// Index range of nodes within `radius` of `center` on every axis,
    /// clamped to the grid. `None` if the range is empty.
    pub fn index_window(&self, center: &[f64], radius: f64) -> Option<(Vec<usize>, Vec<usize>)> {
        let mut a = Vec::with_capacity(self.dim);
        let mut b = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let lo = ((center[k] - radius - self.lo[k]) / self.h[k]).ceil().max(0.0);
            let hi = ((center[k] + radius - self.lo[k]) / self.h[k]).floor().min((self.n[k] - 1) as f64);
            if hi < lo {
                return None;
            }
            a.push(lo as usize);
            b.push(hi as usize);
        }
        Some((a, b))
    }

    /// Flat indices of nodes with `|x - center| < radius`.
    pub fn nodes_in_ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some((a, b)) = self.index_window(center, radius) {
            let r2 = radius * radius;
            self.for_each_in_box(&a, &b, |i, p| {
                let d2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                if d2 < r2 {
                    out.push(i);
                }
            });
        }
        out
    }

    /// Applies `f` at every node.
    pub fn map_nodes<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        par::map_range(self.len(), |i| f(&self.point(i)))
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        write!(f, "dim:{};lo:{};hi:{};h:{}", self.dim, join(&self.lo), join(&self.hi), join(&self.h))
    }
}

fn parse_list(field: &str, s: &str, dim: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| LabError::Parse { field: format!("grid.{field}"), message: e.to_string() })?;
    match vals.len() {
        1 => Ok(vec![vals[0]; dim]),
        n if n == dim => Ok(vals),
        n => Err(LabError::Parse { field: format!("grid.{field}"), message: format!("expected 1 or {dim} values, got {n}") }),
    }
}

impl FromStr for Grid {
    type Err = LabError;

    /// Parses `dim:d;lo:a[,..];hi:b[,..];h:s[,..]`; `n:<points>` may replace `h`.
    fn from_str(s: &str) -> Result<Self> {
        let mut dim = None;
        let (mut lo, mut hi, mut h, mut n) = (None, None, None, None);
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once(':').ok_or_else(|| LabError::Parse {
                field: "grid".into(),
                message: format!("segment `{part}` is not key:value"),
            })?;
            match k.trim() {
                "dim" => {
                    dim = Some(v.trim().parse::<usize>().map_err(|e| LabError::Parse { field: "grid.dim".into(), message: e.to_string() })?)
                }
                "lo" => lo = Some(v.to_string()),
                "hi" => hi = Some(v.to_string()),
                "h" => h = Some(v.to_string()),
                "n" => n = Some(v.to_string()),
                other => return Err(LabError::Parse { field: format!("grid.{other}"), message: "unknown key".into() }),
            }
        }
        let dim = dim.ok_or_else(|| LabError::Parse { field: "grid.dim".into(), message: "missing".into() })?;
        if dim == 0 {
            return Err(LabError::Parse { field: "grid.dim".into(), message: "must be at least 1".into() });
        }
        let missing = |f: &str| LabError::Parse { field: format!("grid.{f}"), message: "missing".into() };
        let lo = parse_list("lo", &lo.ok_or_else(|| missing("lo"))?, dim)?;
        let hi = parse_list("hi", &hi.ok_or_else(|| missing("hi"))?, dim)?;
        let h = match (h, n) {
            (Some(h), _) => parse_list("h", &h, dim)?,
            (None, Some(n)) => {
                let pts = parse_list("n", &n, dim)?;
                pts.iter()
                    .enumerate()
                    .map(|(k, &p)| {
                        if p < 2.0 {
                            Err(LabError::Parse { field: "grid.n".into(), message: "need at least two points".into() })
                        } else {
                            Ok((hi[k] - lo[k]) / (p.round() - 1.0))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            (None, None) => return Err(missing("h")),
        };
        Grid::new(lo, hi, h)
    }
}

/// Values attached to the nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Config(format!("field has {} values for {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        Self { values: grid.map_nodes(f), grid: grid.clone() }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at the nearest node.
    pub fn at(&self, p: &[f64]) -> f64 {
        self.values[self.grid.nearest(p)]
    }

    /// Multilinear interpolation, clamped to the box.
    pub fn interpolate(&self, p: &[f64]) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let n = g.counts()[k];
            let t = ((p[k] - g.lo()[k]) / g.spacing()[k]).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n.saturating_sub(2));
            base[k] = i;
            frac[k] = if n > 1 { t - i as f64 } else { 0.0 };
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                if bit == 1 && g.counts()[k] == 1 {
                    w = 0.0;
                    break;
                }
                idx[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * self.values[g.flat(&idx)];
            }
        }
        acc
    }

    /// Writes `coords..., <name>` rows.
    pub fn write_csv(&self, path: &Path, name: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header: Vec<String> = (0..self.grid.dim()).map(|k| format!("x{}", k + 1)).collect();
        header.push(name.to_string());
        w.write_record(&header).map_err(csv_err)?;
        let mut p = vec![0.0; self.grid.dim()];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.point_into(i, &mut p);
            let mut row: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
            row.push(format!("{v:.17e}"));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`ScalarField::write_csv`] (or any table with
    /// coordinate columns followed by one value column on a tensor grid).
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| LabError::Parse { field: path.display().to_string(), message: e.to_string() })?;
            rows.push(row);
        }
        Self::from_rows(&rows, &path.display().to_string())
    }

    fn from_rows(rows: &[Vec<f64>], label: &str) -> Result<Self> {
        let bad = |m: String| LabError::Parse { field: label.to_string(), message: m };
        let width = rows.first().map(|r| r.len()).ok_or_else(|| bad("empty table".into()))?;
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(bad("rows must share at least two columns".into()));
        }
        let d = width - 1;
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
        for (k, axis) in axes.iter_mut().enumerate() {
            let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
            if v.len() < 2 {
                return Err(bad(format!("axis {k} has fewer than two distinct coordinates")));
            }
            *axis = v;
        }
        let lo: Vec<f64> = axes.iter().map(|a| a[0]).collect();
        let hi: Vec<f64> = axes.iter().map(|a| *a.last().unwrap()).collect();
        let h: Vec<f64> = axes.iter().map(|a| (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64).collect();
        let grid = Grid::new(lo, hi, h)?;
        if grid.len() != rows.len() {
            return Err(bad(format!("{} rows do not form a tensor grid of {} nodes", rows.len(), grid.len())));
        }
        let mut values = vec![f64::NAN; grid.len()];
        for r in rows {
            let i = grid.nearest(&r[..d]);
            values[i] = r[d];
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(bad("coordinates are not on a uniform tensor grid".into()));
        }
        ScalarField::new(grid, values)
    }
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Parse { field: "csv".into(), message: e.to_string() }
}

/// Quadrature rule for integrals over a Euclidean ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BallRule {
    /// Sum over grid cells whose centre is in the ball. With `refine = k > 0`
    /// cells straddling the sphere are split into `2^k` parts per axis and
    /// only the inside parts are kept.
    CellSum { refine: u32 },
    /// Uniform samples in the ball from a generator keyed by
    /// `(seed, ball index)`.
    MonteCarlo { samples: usize, seed: u64 },
    /// Product Gauss rule in polar coordinates (d ≤ 3).
    Spherical { order: usize },
}

impl Default for BallRule {
    fn default() -> Self {
        BallRule::CellSum { refine: 0 }
    }
}

/// Result of a ball integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallIntegral {
    pub value: f64,
    /// Fraction of the ball lying outside the grid's box.
    pub clipped_fraction: f64,
    /// One-sigma sampling error; zero for deterministic rules.
    pub std_error: f64,
}

/// Integrates `f` over `B(center, radius) ∩ box(grid)`.
///
/// Cell sums have an O(h) boundary error when `refine = 0`.
pub fn integrate_ball<F>(f: &F, grid: &Grid, center: &[f64], radius: f64, rule: BallRule, ball_index: u64) -> Result<BallIntegral>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    check_ball(grid.dim(), center, radius)?;
    let d = grid.dim();
    let mut outside = vec![0.0; d];
    let reach = (0..d).all(|k| center[k] + radius >= grid.lo()[k] && center[k] - radius <= grid.hi()[k]);
    if !reach {
        return Err(LabError::DomainCoverage { center: center.to_vec(), radius });
    }
    match rule {
        BallRule::CellSum { refine } => cell_sum(f, grid, center, radius, refine),
        BallRule::MonteCarlo { samples, seed } => {
            let lo = grid.lo().to_vec();
            let hi = grid.hi().to_vec();
            let inside = |p: &[f64]| (0..d).all(|k| p[k] >= lo[k] && p[k] <= hi[k]);
            monte_carlo(f, &inside, center, radius, samples, seed, ball_index, &mut outside)
        }
        BallRule::Spherical { order } => {
            let lo = grid.lo().to_vec();
            let hi = grid.hi().to_vec();
            let inside = |p: &[f64]| (0..d).all(|k| p[k] >= lo[k] && p[k] <= hi[k]);
            spherical(f, &inside, center, radius, order)
        }
    }
}

/// Integrates `f` over the whole ball in `ℝ^d` (no clipping); cell sums are
/// not available here.
pub fn integrate_ball_free<F>(f: &F, center: &[f64], radius: f64, rule: BallRule, ball_index: u64) -> Result<BallIntegral>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let d = center.len();
    check_ball(d, center, radius)?;
    let all = |_: &[f64]| true;
    match rule {
        BallRule::CellSum { .. } => Err(LabError::Config("cell sums need a grid".into())),
        BallRule::MonteCarlo { samples, seed } => {
            let mut scratch = vec![0.0; d];
            monte_carlo(f, &all, center, radius, samples, seed, ball_index, &mut scratch)
        }
        BallRule::Spherical { order } => spherical(f, &all, center, radius, order),
    }
}

fn check_ball(d: usize, center: &[f64], radius: f64) -> Result<()> {
    if center.len() != d {
        return Err(LabError::Config(format!("ball centre has {} coordinates, expected {d}", center.len())));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(LabError::Config(format!("ball radius must be positive, got {radius}")));
    }
    Ok(())
}

fn finite_or_err(v: f64, p: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::Evaluation { point: p.to_vec() })
    }
}

fn cell_sum<F>(f: &F, grid: &Grid, center: &[f64], radius: f64, refine: u32) -> Result<BallIntegral>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let d = grid.dim();
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let half_diag = 0.5 * norm(h);
    let r2 = radius * radius;
    // Lattice count ignoring the box, for the clipped fraction.
    let mut lattice_in = 0usize;
    let mut lattice_total = 0usize;
    {
        let mut lo_i = vec![0i64; d];
        let mut hi_i = vec![0i64; d];
        for k in 0..d {
            lo_i[k] = ((center[k] - radius - grid.lo()[k]) / h[k]).ceil() as i64;
            hi_i[k] = ((center[k] + radius - grid.lo()[k]) / h[k]).floor() as i64;
        }
        let mut idx = lo_i.clone();
        if (0..d).all(|k| lo_i[k] <= hi_i[k]) {
            'outer: loop {
                let mut d2 = 0.0;
                for k in 0..d {
                    let x = grid.lo()[k] + idx[k] as f64 * h[k] - center[k];
                    d2 += x * x;
                }
                if d2 < r2 {
                    lattice_total += 1;
                    if (0..d).all(|k| idx[k] >= 0 && idx[k] < grid.counts()[k] as i64) {
                        lattice_in += 1;
                    }
                }
                let mut k = d;
                loop {
                    if k == 0 {
                        break 'outer;
                    }
                    k -= 1;
                    if idx[k] < hi_i[k] {
                        idx[k] += 1;
                        break;
                    }
                    idx[k] = lo_i[k];
                }
            }
        }
    }
    let clipped_fraction = if lattice_total == 0 { 0.0 } else { 1.0 - lattice_in as f64 / lattice_total as f64 };

    let window = if refine == 0 { radius } else { radius + half_diag };
    let Some((a, b)) = grid.index_window(center, window) else {
        return Ok(BallIntegral { value: 0.0, clipped_fraction: 1.0, std_error: 0.0 });
    };
    let sub = 1usize << refine;
    let mut acc = 0.0;
    let mut err: Option<LabError> = None;
    let mut q = vec![0.0; d];
    grid.for_each_in_box(&a, &b, |_, p| {
        if err.is_some() {
            return;
        }
        let dc = dist(p, center);
        if refine == 0 || dc + half_diag <= radius {
            if dc < radius {
                match finite_or_err(f(p), p) {
                    Ok(v) => acc += v * vol,
                    Err(e) => err = Some(e),
                }
            }
            return;
        }
        if dc - half_diag >= radius {
            return;
        }
        let subvol = vol / (sub.pow(d as u32)) as f64;
        let total = sub.pow(d as u32);
        for s in 0..total {
            let mut t = s;
            let mut d2 = 0.0;
            for k in 0..d {
                let j = t % sub;
                t /= sub;
                q[k] = p[k] - 0.5 * h[k] + (j as f64 + 0.5) * h[k] / sub as f64;
                d2 += (q[k] - center[k]) * (q[k] - center[k]);
            }
            if d2 < r2 {
                match finite_or_err(f(&q), &q) {
                    Ok(v) => acc += v * subvol,
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BallIntegral { value: acc, clipped_fraction, std_error: 0.0 })
}

#[allow(clippy::too_many_arguments)]
fn monte_carlo<F, I>(
    f: &F,
    inside: &I,
    center: &[f64],
    radius: f64,
    samples: usize,
    seed: u64,
    ball_index: u64,
    p: &mut [f64],
) -> Result<BallIntegral>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    I: Fn(&[f64]) -> bool,
{
    if samples == 0 {
        return Err(LabError::Config("Monte-Carlo rule needs at least one sample".into()));
    }
    let d = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ball_index);
    let vol = unit_ball_volume(d) * radius.powi(d as i32);
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut outside = 0usize;
    for _ in 0..samples {
        let mut n2 = 0.0;
        for x in p.iter_mut() {
            *x = rng.sample::<f64, _>(StandardNormal);
            n2 += *x * *x;
        }
        let rr = radius * rng.gen::<f64>().powf(1.0 / d as f64) / n2.sqrt();
        for k in 0..d {
            p[k] = center[k] + rr * p[k];
        }
        if !inside(p) {
            outside += 1;
            continue;
        }
        let v = finite_or_err(f(p), p)?;
        s1 += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok(BallIntegral {
        value: vol * mean,
        clipped_fraction: outside as f64 / n,
        std_error: vol * (var / n).sqrt(),
    })
}

fn spherical<F, I>(f: &F, inside: &I, center: &[f64], radius: f64, order: usize) -> Result<BallIntegral>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    I: Fn(&[f64]) -> bool,
{
    let d = center.len();
    let order = order.max(2);
    let (gx, gw) = crate::quad::gauss_legendre(order);
    let mut p = vec![0.0; d];
    let mut acc = 0.0;
    let mut total_w = 0.0;
    let mut out_w = 0.0;
    // Radial nodes on (0, radius) with Jacobian r^{d-1}.
    let radial: Vec<(f64, f64)> = gx.iter().zip(&gw).map(|(&x, &w)| {
        let r = 0.5 * radius * (x + 1.0);
        (r, 0.5 * radius * w * r.powi(d as i32 - 1))
    }).collect();
    let mut visit = |p: &[f64], w: f64| -> Result<()> {
        total_w += w;
        if inside(p) {
            acc += w * finite_or_err(f(p), p)?;
        } else {
            out_w += w;
        }
        Ok(())
    };
    match d {
        1 => {
            for &(r, w) in &radial {
                for s in [-1.0, 1.0] {
                    p[0] = center[0] + s * r;
                    visit(&p, w)?;
                }
            }
        }
        2 => {
            let na = 2 * order;
            let dphi = 2.0 * std::f64::consts::PI / na as f64;
            for &(r, w) in &radial {
                for a in 0..na {
                    let phi = (a as f64 + 0.5) * dphi;
                    p[0] = center[0] + r * phi.cos();
                    p[1] = center[1] + r * phi.sin();
                    visit(&p, w * dphi)?;
                }
            }
        }
        3 => {
            let na = 2 * order;
            let dphi = 2.0 * std::f64::consts::PI / na as f64;
            for &(r, w) in &radial {
                for (&ct, &wt) in gx.iter().zip(&gw) {
                    let st = (1.0 - ct * ct).sqrt();
                    for a in 0..na {
                        let phi = (a as f64 + 0.5) * dphi;
                        p[0] = center[0] + r * st * phi.cos();
                        p[1] = center[1] + r * st * phi.sin();
                        p[2] = center[2] + r * ct;
                        visit(&p, w * wt * dphi)?;
                    }
                }
            }
        }
        _ => {
            return Err(LabError::Dimension { dim: d, reason: "spherical product rule supports d ≤ 3".into() });
        }
    }
    Ok(BallIntegral {
        value: acc,
        clipped_fraction: if total_w > 0.0 { out_w / total_w } else { 0.0 },
        std_error: 0.0,
    })
}

/// A Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Distribution of radii for generated ball families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum RadiusLaw {
    Fixed { r: f64 },
    Uniform { min: f64, max: f64 },
    LogUniform { min: f64, max: f64 },
}

impl RadiusLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadiusLaw::Fixed { r } => r > 0.0 && r.is_finite(),
            RadiusLaw::Uniform { min, max } | RadiusLaw::LogUniform { min, max } => min > 0.0 && max >= min && max.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::Config(format!("invalid radius law {self:?}")))
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            RadiusLaw::Fixed { r } => r,
            RadiusLaw::Uniform { min, max } => min + (max - min) * rng.gen::<f64>(),
            RadiusLaw::LogUniform { min, max } => (min.ln() + (max.ln() - min.ln()) * rng.gen::<f64>()).exp(),
        }
    }
}

impl FromStr for RadiusLaw {
    type Err = LabError;

    /// `fixed:r`, `uniform:a,b` or `loguniform:a,b`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| LabError::Parse { field: "radius_law".into(), message: m.to_string() };
        let (kind, args) = s.split_once(':').ok_or_else(|| bad("expected kind:args"))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        let law = match (kind.trim(), nums.as_slice()) {
            ("fixed", [r]) => RadiusLaw::Fixed { r: *r },
            ("uniform", [a, b]) => RadiusLaw::Uniform { min: *a, max: *b },
            ("loguniform", [a, b]) => RadiusLaw::LogUniform { min: *a, max: *b },
            _ => return Err(bad("unknown law or wrong number of arguments")),
        };
        law.validate()?;
        Ok(law)
    }
}

/// A reproducible family of Euclidean balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanBallFamily {
    pub balls: Vec<Ball>,
    pub seed: u64,
    pub radius_law: Option<RadiusLaw>,
    pub margin: f64,
    /// Cumulative counts at which estimators record their traces; empty
    /// means powers of two.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
}

impl EuclideanBallFamily {
    /// Wraps an explicit list of balls.
    pub fn from_balls(balls: Vec<Ball>) -> Result<Self> {
        if balls.is_empty() {
            return Err(LabError::Config("ball family is empty".into()));
        }
        if let Some(b) = balls.iter().find(|b| !(b.radius > 0.0)) {
            return Err(LabError::Config(format!("ball radius must be positive, got {}", b.radius)));
        }
        Ok(Self { balls, seed: 0, radius_law: None, margin: 0.0, checkpoints: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }
    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Concatenates families, recording a checkpoint at the end of each.
    pub fn levels(parts: Vec<EuclideanBallFamily>) -> Result<Self> {
        let mut balls = Vec::new();
        let mut checkpoints = Vec::new();
        let seed = parts.first().map_or(0, |p| p.seed);
        for p in parts {
            balls.extend(p.balls);
            checkpoints.push(balls.len());
        }
        let mut f = Self::from_balls(balls)?;
        f.seed = seed;
        f.checkpoints = checkpoints;
        Ok(f)
    }

    /// First `n` balls, keeping the checkpoints that fit.
    pub fn truncated(&self, n: usize) -> Self {
        let mut f = self.clone();
        f.balls.truncate(n);
        f.checkpoints.retain(|&c| c <= n);
        f
    }
}

/// Draws `count` balls with centres uniform in the grid box shrunk by
/// `margin` on every side.
pub fn sample_ball_family(grid: &Grid, count: usize, radius_law: &RadiusLaw, seed: u64, margin: f64) -> Result<EuclideanBallFamily> {
    if count == 0 {
        return Err(LabError::Config("requested an empty ball family".into()));
    }
    radius_law.validate()?;
    let d = grid.dim();
    let lo: Vec<f64> = grid.lo().iter().map(|x| x + margin).collect();
    let hi: Vec<f64> = grid.hi().iter().map(|x| x - margin).collect();
    if (0..d).any(|k| lo[k] > hi[k]) || margin < 0.0 {
        return Err(LabError::Config(format!("margin {margin} leaves no admissible centres")));
    }
    let balls = par::map_range(count, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let center: Vec<f64> = (0..d).map(|k| lo[k] + (hi[k] - lo[k]) * rng.gen::<f64>()).collect();
        let radius = radius_law.draw(&mut rng);
        Ball { center, radius }
    });
    Ok(EuclideanBallFamily { balls, seed, radius_law: Some(radius_law.clone()), margin, checkpoints: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn grid_spec_roundtrip() {
        let g: Grid = "dim:3;lo:-4;hi:4;h:0.5".parse().unwrap();
        assert_eq!(g.counts(), &[17, 17, 17]);
        assert_eq!(g.len(), 17 * 17 * 17);
        let g2: Grid = g.to_string().parse().unwrap();
        assert_eq!(g, g2);
        assert!("dim:2;lo:0;hi:1".parse::<Grid>().is_err());
        assert!("dim:2;lo:0;hi:1;h:-1".parse::<Grid>().is_err());
        let g3: Grid = "dim:2;lo:0,1;hi:1,3;n:11,5".parse().unwrap();
        assert_eq!(g3.counts(), &[11, 5]);
    }

    #[test]
    fn flat_and_multi_are_inverse() {
        let g = Grid::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0], vec![0.25, 0.5, 0.5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat(&g.multi(i)), i);
        }
        let mut nb = Vec::new();
        g.axis_neighbors(0, &mut nb);
        assert_eq!(nb.len(), 3);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0, epsilon = 1e-14);
        assert_relative_eq!(unit_ball_volume(2), PI, epsilon = 1e-14);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn spherical_rule_is_accurate() {
        let g = Grid::cube(3, -2.0, 2.0, 0.5).unwrap();
        let one = |_: &[f64]| 1.0;
        let v = integrate_ball(&one, &g, &[0.0; 3], 1.0, BallRule::Spherical { order: 8 }, 0).unwrap();
        assert_relative_eq!(v.value, 4.0 * PI / 3.0, max_relative = 1e-12);
        let r2 = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
        let v = integrate_ball_free(&r2, &[0.0; 3], 1.0, BallRule::Spherical { order: 8 }, 0).unwrap();
        assert_relative_eq!(v.value, 4.0 * PI / 5.0, max_relative = 1e-12);
    }

    #[test]
    fn clipped_fraction_for_corner_ball() {
        let g = Grid::cube(2, 0.0, 4.0, 0.01).unwrap();
        let one = |_: &[f64]| 1.0;
        let v = integrate_ball(&one, &g, &[0.0, 0.0], 1.0, BallRule::CellSum { refine: 0 }, 0).unwrap();
        assert!((v.clipped_fraction - 0.75).abs() < 0.01);
        assert!(integrate_ball(&one, &g, &[-5.0, 0.0], 1.0, BallRule::CellSum { refine: 0 }, 0).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_multilinear() {
        let g = Grid::cube(2, -1.0, 1.0, 0.25).unwrap();
        let f = ScalarField::from_fn(&g, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1]);
        let p = [0.13, -0.77];
        assert_relative_eq!(f.interpolate(&p), 1.0 + 0.26 + 0.77 - 0.5 * 0.13 * 0.77, epsilon = 1e-12);
    }
}
