//! Maximal operators, the constant-potential Riesz transform and weighted
//! norm lower bounds on tensor grids.
//!
//! Translation-invariant operators (constant potentials) are applied by FFT
//! convolution over the whole grid. The adapted maximal operators work from
//! per-center radial profiles: nodes sorted by distance from the center with
//! prefix sums of `|f|`, so every radius costs one binary search.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::agmon::DistanceProvider;
use crate::critical_radius::CriticalRadiusField;
use crate::error::{LabError, Result};
use crate::estimate::LogSum;
use crate::grid::{dist, EuclideanBallFamily, Grid, ScalarField};
use crate::kernels::{self, DiscreteSemigroup};
use crate::par;
use crate::weights::{Weight, WeightTable};

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(LabError::Config(format!("invalid log grid [{lo}, {hi}] with {count} points")));
    }
    let a = lo.ln();
    let b = hi.ln();
    Ok((0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect())
}

/// Log grid with `per_decade` points per factor of ten.
pub fn log_grid_per_decade(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    let decades = (hi / lo).log10().max(0.0);
    log_grid(lo, hi, ((decades * per_decade as f64).ceil() as usize + 1).max(2))
}

fn check_search_grid(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Config(format!("{what} grid must be nonempty, positive and strictly increasing")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    Centered,
    Uncentered,
}

/// Pointwise values of a maximal operator at evaluation nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaximalResult {
    pub points: Vec<usize>,
    pub values: Vec<f64>,
    /// Radius (or time) attaining the sup at each point.
    pub argmax: Vec<f64>,
    /// Balls skipped because they reach the domain boundary.
    pub skipped: usize,
    /// Points whose sup sits at an end of the search grid.
    pub endpoint_hits: usize,
    pub warnings: Vec<String>,
}

impl MaximalResult {
    fn finish(points: Vec<usize>, best: Vec<(f64, f64)>, skipped: usize, grid: &[f64]) -> Self {
        let last = *grid.last().expect("nonempty");
        // The lower end is attained whenever |f| peaks at the point; only the upper end signals truncation.
        let endpoint_hits = best.iter().filter(|b| b.1 == last && b.0 > 0.0).count();
        let mut warnings = Vec::new();
        if best.len() > 0 && endpoint_hits * 10 > best.len() {
            let msg = format!("sup attained at the upper search end {last} for {endpoint_hits} of {} points; extend the grid", best.len());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        if skipped > 0 {
            warnings.push(format!("{skipped} clipped ball(s) skipped"));
        }
        MaximalResult {
            points,
            values: best.iter().map(|b| b.0).collect(),
            argmax: best.iter().map(|b| b.1).collect(),
            skipped,
            endpoint_hits,
            warnings,
        }
    }
}

/// Nodes sorted by distance from a center with prefix sums of `|f|`.
struct Profile {
    dist: Vec<f64>,
    prefix: Vec<f64>,
    /// Largest radius whose ball stays off the boundary.
    clip: f64,
}

impl Profile {
    fn new(mut pairs: Vec<(f64, usize)>, f: &[f64], clip: f64) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut prefix = Vec::with_capacity(pairs.len() + 1);
        prefix.push(0.0);
        let mut s = 0.0;
        for &(_, i) in &pairs {
            s += f[i].abs();
            prefix.push(s);
        }
        Profile { dist: pairs.iter().map(|p| p.0).collect(), prefix, clip }
    }

    /// Average of `|f|` over `{u < r}`; `None` when clipped or empty.
    fn average(&self, r: f64) -> Option<f64> {
        if r > self.clip {
            return None;
        }
        let k = self.dist.partition_point(|&u| u < r);
        if k == 0 {
            return None;
        }
        Some(self.prefix[k] / k as f64)
    }
}

fn euclidean_profile(grid: &Grid, center: usize, rmax: f64, f: &[f64]) -> Profile {
    let c = grid.point(center);
    let mut pairs = Vec::new();
    if let Some((a, b)) = grid.index_window(&c, rmax) {
        grid.for_each_in_box(&a, &b, |i, p| {
            let d = dist(p, &c);
            if d <= rmax {
                pairs.push((d, i));
            }
        });
    }
    Profile::new(pairs, f, boundary_distance(grid, center))
}

/// Distance from a node to the nearest boundary node along an axis.
fn boundary_distance(grid: &Grid, node: usize) -> f64 {
    let idx = grid.multi(node);
    (0..grid.dim())
        .map(|k| {
            let n = grid.counts()[k];
            idx[k].min(n - 1 - idx[k]) as f64 * grid.spacing()[k]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Shared sup-over-balls loop. `profile(c)` builds the profile around
/// center `c` together with the distances from `c` to every evaluation
/// point; `damp(c, r)` is the multiplicative damping (≤ 1 typically).
fn sup_over_balls<P, D>(points: &[usize], centers: &[usize], radii: &[f64], profile: P, damp: D) -> Result<(Vec<(f64, f64)>, usize)>
where
    P: Fn(usize) -> Result<(Profile, Vec<f64>)> + Sync + Send,
    D: Fn(usize, f64) -> f64 + Sync + Send,
{
    let partial = par::try_map_range(centers.len(), |ci| {
        let c = centers[ci];
        let (prof, to_points) = profile(c)?;
        let mut best = vec![(0.0f64, radii[0]); points.len()];
        let mut skipped = 0usize;
        for &r in radii {
            let Some(avg) = prof.average(r) else {
                if r > prof.clip {
                    skipped += 1;
                }
                continue;
            };
            let v = avg * damp(c, r);
            for (k, &dx) in to_points.iter().enumerate() {
                if dx < r && v > best[k].0 {
                    best[k] = (v, r);
                }
            }
        }
        Ok::<_, LabError>((best, skipped))
    })?;
    let mut best = vec![(0.0f64, radii[0]); points.len()];
    let mut skipped = 0;
    // Reduction in center order keeps ties deterministic.
    for (b, s) in partial {
        skipped += s;
        for (k, v) in b.into_iter().enumerate() {
            if v.0 > best[k].0 {
                best[k] = v;
            }
        }
    }
    Ok((best, skipped))
}

fn check_field(f: &ScalarField, grid: &Grid) -> Result<()> {
    if f.grid.counts() != grid.counts() || f.grid.dim() != grid.dim() {
        return Err(LabError::Precondition("field and operator grids differ".into()));
    }
    Ok(())
}

fn check_points(points: &[usize], grid: &Grid) -> Result<()> {
    if points.is_empty() || points.iter().any(|&p| p >= grid.len()) {
        return Err(LabError::Config("evaluation points must be nonempty valid node indices".into()));
    }
    Ok(())
}

/// Which balls enter an adapted maximal function.
#[derive(Debug, Clone)]
pub struct BallSearch {
    pub mode: Centering,
    pub radii: Vec<f64>,
    pub points: Vec<usize>,
    /// Candidate centers for the uncentered mode; defaults to all nodes.
    pub centers: Option<Vec<usize>>,
}

impl BallSearch {
    fn centers(&self, grid: &Grid) -> Vec<usize> {
        match (self.mode, &self.centers) {
            (Centering::Centered, _) => self.points.clone(),
            (Centering::Uncentered, Some(c)) => c.clone(),
            (Centering::Uncentered, None) => (0..grid.len()).collect(),
        }
    }
}

/// `sup_t e^{-ct} |B_ρ(x,t)|^{-1} ∫_{B_ρ(x,t)} |f|` over metric balls; the
/// uncentered mode takes the sup over balls from the center panel that
/// contain the point.
pub fn maximal_adapted(f: &ScalarField, provider: &DistanceProvider, c: f64, search: &BallSearch) -> Result<MaximalResult> {
    let grid = provider.grid();
    check_field(f, grid)?;
    check_points(&search.points, grid)?;
    check_search_grid(&search.radii, "radius")?;
    if !(c >= 0.0) {
        return Err(LabError::Config(format!("damping c must be nonnegative, got {c}")));
    }
    let rmax = *search.radii.last().expect("nonempty");
    let centers = search.centers(grid);
    let centered = search.mode == Centering::Centered;
    let (best, skipped) = if centered {
        let res = par::try_map_range(search.points.len(), |k| {
            let x = search.points[k];
            let prof = metric_profile(provider, x, rmax, &f.values)?;
            let mut best = (0.0f64, search.radii[0]);
            let mut skipped = 0;
            for &r in &search.radii {
                match prof.average(r) {
                    Some(a) => {
                        let v = a * (-c * r).exp();
                        if v > best.0 {
                            best = (v, r);
                        }
                    }
                    None => skipped += (r > prof.clip) as usize,
                }
            }
            Ok::<_, LabError>((best, skipped))
        })?;
        let skipped = res.iter().map(|r| r.1).sum();
        (res.into_iter().map(|r| r.0).collect(), skipped)
    } else {
        sup_over_balls(
            &search.points,
            &centers,
            &search.radii,
            |cn| {
                let field = provider.solve_with_cutoff(&grid.point(cn), rmax)?;
                let to_points = search.points.iter().map(|&p| field.values()[p]).collect();
                Ok((profile_from_field(&field, &f.values), to_points))
            },
            |_, r| (-c * r).exp(),
        )?
    };
    Ok(MaximalResult::finish(search.points.clone(), best, skipped, &search.radii))
}

fn profile_from_field(field: &crate::agmon::AgmonField, f: &[f64]) -> Profile {
    let s = field.sorted();
    let clip = s.unclipped_radius();
    let pairs = s.dist.iter().cloned().zip(s.order.iter().cloned()).collect();
    Profile::new(pairs, f, clip)
}

fn metric_profile(provider: &DistanceProvider, node: usize, rmax: f64, f: &[f64]) -> Result<Profile> {
    let field = provider.solve_with_cutoff(&provider.grid().point(node), rmax)?;
    Ok(profile_from_field(&field, f))
}

/// `sup_t Φ(x,t)^{-1} |B(x,t)|^{-1} ∫_{B(x,t)} |f|` with
/// `Φ(x,t) = exp(c (1 + t/ρ(x))^m)`; uncentered balls are damped at their own center.
pub fn maximal_phi(f: &ScalarField, rho: &CriticalRadiusField, c: f64, m: f64, search: &BallSearch) -> Result<MaximalResult> {
    let grid = &f.grid;
    check_points(&search.points, grid)?;
    check_search_grid(&search.radii, "radius")?;
    if !(c >= 0.0 && m > 0.0) {
        return Err(LabError::Config(format!("Φ damping needs c ≥ 0 and m > 0, got c = {c}, m = {m}")));
    }
    let rmax = *search.radii.last().expect("nonempty");
    let centers = search.centers(grid);
    let rho_at: HashMap<usize, f64> = centers.iter().map(|&cn| (cn, rho.at(&grid.point(cn)))).collect();
    let points = &search.points;
    let centered = search.mode == Centering::Centered;
    let (best, skipped) = sup_over_balls(
        points,
        &centers,
        &search.radii,
        |cn| {
            let cp = grid.point(cn);
            // In centered mode only the ball around the point itself counts.
            let to = points
                .iter()
                .map(|&p| match (p == cn, centered) {
                    (true, _) => 0.0,
                    (false, true) => f64::INFINITY,
                    (false, false) => dist(&grid.point(p), &cp),
                })
                .collect();
            Ok((euclidean_profile(grid, cn, rmax, &f.values), to))
        },
        |cn, r| (-c * (1.0 + r / rho_at[&cn]).powf(m)).exp(),
    )?;
    Ok(MaximalResult::finish(points.clone(), best, skipped, &search.radii))
}

/// `sup_t avg_{B(x,t)} |f| · e^{-c s(t)}` with Euclidean balls and a
/// caller-supplied damping exponent `s(t)`; the direct reference used to
/// cross-check the adapted operator for constant `ρ`.
pub fn maximal_euclidean_direct(f: &ScalarField, damping: impl Fn(f64) -> f64, radii: &[f64], points: &[usize]) -> Result<MaximalResult> {
    let grid = &f.grid;
    check_points(points, grid)?;
    check_search_grid(radii, "radius")?;
    let mut best = Vec::with_capacity(points.len());
    let mut skipped = 0;
    for &x in points {
        let p = grid.point(x);
        let clip = boundary_distance(grid, x);
        let mut b = (0.0f64, radii[0]);
        for &r in radii {
            if r > clip {
                skipped += 1;
                continue;
            }
            let nodes = grid.nodes_in_ball(&p, r);
            if nodes.is_empty() {
                continue;
            }
            let avg = nodes.iter().map(|&i| f.values[i].abs()).sum::<f64>() / nodes.len() as f64;
            let v = avg * damping(r);
            if v > b.0 {
                b = (v, r);
            }
        }
        best.push(b);
    }
    Ok(MaximalResult::finish(points.to_vec(), best, skipped, radii))
}

/// Heat semigroup realisations for `T*`.
#[derive(Debug, Clone)]
pub enum HeatFamily {
    /// `V = |x|²` through the Mehler kernel, times in the Mehler parameter.
    Mehler,
    /// `V ≡ N`; `N = 0` gives the free semigroup.
    Constant { n: f64 },
    /// Finite-difference semigroup of a 1-D potential.
    Discrete(Arc<DiscreteSemigroup>),
}

/// `sup_t ∫ k_t(x,y) |f(y)| dy` over a time grid by node quadrature.
///
/// For the closed-form families, times below `h²` are not resolved by node
/// quadrature; when the grid has any, they are replaced by the limit `|f(x)|`
/// as `t → 0`.
pub fn heat_maximal(f: &ScalarField, family: &HeatFamily, times: &[f64], points: &[usize]) -> Result<MaximalResult> {
    let grid = &f.grid;
    check_points(points, grid)?;
    check_search_grid(times, "time")?;
    let vol = grid.cell_volume();
    let t_min = grid.max_spacing().powi(2);
    let resolved: Vec<f64> = times.iter().cloned().filter(|&t| t >= t_min).collect();
    let small_limit = resolved.len() < times.len();
    let support: Vec<(Vec<f64>, f64)> = (0..grid.len())
        .filter(|&i| f.values[i] != 0.0)
        .map(|i| (grid.point(i), f.values[i].abs()))
        .collect();
    let best: Vec<(f64, f64)> = match family {
        HeatFamily::Mehler | HeatFamily::Constant { .. } => par::try_map_range(points.len(), |k| {
            let x = grid.point(points[k]);
            let mut b = (if small_limit { f.values[points[k]].abs() } else { 0.0 }, times[0]);
            for &t in &resolved {
                let mut s = 0.0;
                for (y, fy) in &support {
                    let kv = match family {
                        HeatFamily::Mehler => kernels::mehler_kernel(t, &x, y)?,
                        HeatFamily::Constant { n } => kernels::heat_kernel_constant(*n, t, &x, y)?,
                        HeatFamily::Discrete(_) => unreachable!(),
                    };
                    s += kv * fy;
                }
                let v = s * vol;
                if v > b.0 {
                    b = (v, t);
                }
            }
            Ok::<_, LabError>(b)
        })?,
        HeatFamily::Discrete(sg) => {
            if sg.grid().counts() != grid.counts() {
                return Err(LabError::Precondition("semigroup and field grids differ".into()));
            }
            let abs: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
            let mut best = vec![(0.0f64, times[0]); points.len()];
            for &t in times {
                let u = sg.apply(t, &abs)?;
                for (k, &p) in points.iter().enumerate() {
                    if u[p] > best[k].0 {
                        best[k] = (u[p], t);
                    }
                }
            }
            best
        }
    };
    Ok(MaximalResult::finish(points.to_vec(), best, 0, times))
}

/// Zero-padded FFT convolution on a grid: `(K * f)(x_i) = Σ_j K(x_i - x_j) f_j |cell|`.
pub struct Convolver {
    grid: Grid,
    padded: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver").field("grid", &self.grid).field("padded", &self.padded).finish()
    }
}

impl Convolver {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let padded: Vec<usize> = grid.counts().iter().map(|&n| 2 * n).collect();
        let forward = padded.iter().map(|&p| planner.plan_fft_forward(p)).collect();
        let inverse = padded.iter().map(|&p| planner.plan_fft_inverse(p)).collect();
        Convolver { grid: grid.clone(), padded, forward, inverse }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn padded_len(&self) -> usize {
        self.padded.iter().product()
    }

    fn transform(&self, data: &mut [Complex<f64>], inverse: bool) {
        let d = self.padded.len();
        let mut stride = 1;
        for k in (0..d).rev() {
            let n = self.padded[k];
            let plan = if inverse { &self.inverse[k] } else { &self.forward[k] };
            let total = data.len();
            let block = n * stride;
            let mut buf = vec![Complex::new(0.0, 0.0); n];
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, b) in buf.iter_mut().enumerate() {
                        *b = data[base + j * stride];
                    }
                    plan.process(&mut buf);
                    for (j, b) in buf.iter().enumerate() {
                        data[base + j * stride] = *b;
                    }
                }
            }
            stride *= n;
        }
    }

    /// Spectrum of the kernel `K(δ)` sampled at lattice offsets.
    pub fn spectrum<K>(&self, kernel: K) -> Vec<Complex<f64>>
    where
        K: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let d = self.padded.len();
        let total = self.padded_len();
        let h = self.grid.spacing().to_vec();
        let n = self.grid.counts().to_vec();
        let padded = self.padded.clone();
        let vals = par::map_range(total, |flat| {
            let mut rem = flat;
            let mut delta = vec![0.0; d];
            for k in (0..d).rev() {
                let i = rem % padded[k];
                rem /= padded[k];
                // Offsets -(n-1)..=(n-1) wrap around; index n is never used.
                let m = if i < n[k] { i as i64 } else if i > n[k] { i as i64 - padded[k] as i64 } else { return 0.0 };
                delta[k] = m as f64 * h[k];
            }
            kernel(&delta)
        });
        let mut data: Vec<Complex<f64>> = vals.into_iter().map(|v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Applies a kernel spectrum to `f` on the grid.
    pub fn apply(&self, spectrum: &[Complex<f64>], f: &[f64]) -> Vec<f64> {
        let d = self.padded.len();
        let total = self.padded_len();
        let n = self.grid.counts();
        let mut data = vec![Complex::new(0.0, 0.0); total];
        for (i, &v) in f.iter().enumerate() {
            if v != 0.0 {
                data[self.padded_index(&self.grid.multi(i))] = Complex::new(v, 0.0);
            }
        }
        self.transform(&mut data, false);
        for (a, b) in data.iter_mut().zip(spectrum) {
            *a *= b;
        }
        self.transform(&mut data, true);
        let scale = self.grid.cell_volume() / total as f64;
        let mut out = vec![0.0; f.len()];
        let mut idx = vec![0usize; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut rem = i;
            for k in (0..d).rev() {
                idx[k] = rem % n[k];
                rem /= n[k];
            }
            *o = data[self.padded_index(&idx)].re * scale;
        }
        out
    }

    fn padded_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.padded).fold(0, |acc, (&i, &p)| acc * p + i)
    }
}

/// Operator on grid functions.
pub trait GridOperator: Send + Sync {
    fn grid(&self) -> &Grid;
    fn label(&self) -> String;
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>>;
}

/// The identity.
#[derive(Debug, Clone)]
pub struct Identity {
    pub grid: Grid,
}

impl GridOperator for Identity {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn label(&self) -> String {
        "identity".into()
    }
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(f.to_vec())
    }
}

/// Constant-potential Riesz transform `R_N^{(j)}` by principal-value
/// convolution with the Bessel-type kernel.
pub struct RieszConstant {
    conv: Convolver,
    spectrum: Vec<Complex<f64>>,
    pub n: f64,
    pub axis: usize,
    /// Kernel truncated to `|x - y| ≤ local` when set.
    pub local: Option<f64>,
}

impl RieszConstant {
    pub fn new(grid: &Grid, n: f64, axis: usize, local: Option<f64>) -> Result<Self> {
        let d = grid.dim();
        if d < 3 || axis >= d {
            return Err(LabError::Dimension { dim: d, reason: "Riesz transform needs d >= 3 and axis < d".into() });
        }
        if !(n > 0.0) {
            return Err(LabError::Domain(format!("N must be positive, got {n}")));
        }
        let conv = Convolver::new(grid);
        let h = grid.spacing().to_vec();
        let hmax = grid.max_spacing();
        let cache: std::sync::Mutex<HashMap<u64, f64>> = std::sync::Mutex::new(HashMap::new());
        let radial = |r: f64| -> f64 {
            let key = (r / hmax * 1e7).round() as u64;
            if let Some(v) = cache.lock().expect("cache lock").get(&key) {
                return *v;
            }
            let v = kernels::riesz_kernel_radial(n, d, r).unwrap_or(0.0);
            cache.lock().expect("cache lock").insert(key, v);
            v
        };
        let kern = |delta: &[f64]| -> f64 {
            let r = crate::grid::norm(delta);
            if let Some(l) = local {
                if r > l {
                    return 0.0;
                }
            }
            -delta[axis] / r * radial(r)
        };
        let spectrum = conv.spectrum(|delta: &[f64]| {
            let r = crate::grid::norm(delta);
            if r == 0.0 {
                return 0.0;
            }
            if r > 2.0 * hmax {
                return kern(delta);
            }
            // Near-singular ring: average over 2^d sub-cell points.
            let mut s = 0.0;
            let mut sub = vec![0.0; d];
            for mask in 0..(1usize << d) {
                for k in 0..d {
                    let sign = if mask >> k & 1 == 1 { 0.25 } else { -0.25 };
                    sub[k] = delta[k] + sign * h[k];
                }
                s += kern(&sub);
            }
            s / (1usize << d) as f64
        });
        Ok(RieszConstant { conv, spectrum, n, axis, local })
    }
}

impl GridOperator for RieszConstant {
    fn grid(&self) -> &Grid {
        self.conv.grid()
    }
    fn label(&self) -> String {
        let loc = self.local.map(|l| format!(",local:{l}")).unwrap_or_default();
        format!("riesz-constant(N={},j={}{loc})", self.n, self.axis + 1)
    }
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.grid().len() {
            return Err(LabError::Precondition("field length does not match the grid".into()));
        }
        Ok(self.conv.apply(&self.spectrum, f))
    }
}

/// `R_N^{(j)} f` over the whole grid.
pub fn riesz_apply_constant(f: &ScalarField, n: f64, axis: usize) -> Result<ScalarField> {
    let op = RieszConstant::new(&f.grid, n, axis, None)?;
    ScalarField::new(f.grid.clone(), op.apply(&f.values)?)
}

/// Pointwise maximum over a family of nonnegative convolution kernels applied to `|f|`.
pub struct ConvolutionMaximal {
    conv: Convolver,
    spectra: Vec<Complex<f64>>,
    count: usize,
    pub params: Vec<f64>,
    label: String,
}

impl ConvolutionMaximal {
    /// Builds one spectrum per parameter from `kernel(param, δ)`.
    pub fn new<K>(grid: &Grid, params: &[f64], label: String, kernel: K) -> Result<Self>
    where
        K: Fn(f64, &[f64]) -> f64 + Sync + Send,
    {
        check_search_grid(params, "parameter")?;
        let conv = Convolver::new(grid);
        let mut spectra = Vec::new();
        for &t in params {
            spectra.extend(conv.spectrum(|d| kernel(t, d)));
        }
        Ok(ConvolutionMaximal { conv, spectra, count: params.len(), params: params.to_vec(), label })
    }

    /// `sup_t avg_{B(x,t)} |f| · e^{-c √N t}` (`M_{N,c}` with `ρ_N = N^{-1/2}`,
    /// Euclidean radius `t`), optionally restricted to `t ≤ local`.
    pub fn constant_hl(grid: &Grid, n: f64, c: f64, radii: &[f64]) -> Result<Self> {
        let h = grid.spacing().to_vec();
        let d = grid.dim();
        let label = format!("maximal-constant(N={n},c={c})");
        Self::new(grid, radii, label, move |t, delta| {
            let r = crate::grid::norm(delta);
            if r >= t && r > 0.0 {
                return 0.0;
            }
            // Lattice count of the ball, so averages of constants are exact.
            let cnt = lattice_ball_count(&h, d, t);
            (-c * n.sqrt() * t).exp() / (cnt as f64 * h.iter().product::<f64>())
        })
    }

    /// `sup_t e^{-tL} |f|` for `L = -Δ + N`, kernel truncated to `|δ| ≤ local` when set.
    pub fn constant_heat(grid: &Grid, n: f64, times: &[f64], local: Option<f64>) -> Result<Self> {
        let label = format!("heat-maximal-constant(N={n})");
        Self::new(grid, times, label, move |t, delta| {
            let r = crate::grid::norm(delta);
            if local.is_some_and(|l| r > l) {
                return 0.0;
            }
            let z = vec![0.0; delta.len()];
            kernels::heat_kernel_constant(n, t, delta, &z).unwrap_or(0.0)
        })
    }
}

/// Number of lattice offsets with `|δ| < t` (origin always counted).
fn lattice_ball_count(h: &[f64], d: usize, t: f64) -> usize {
    let m: Vec<i64> = h.iter().map(|hk| (t / hk).floor() as i64).collect();
    let mut count = 0usize;
    let mut idx = vec![0i64; d];
    for k in 0..d {
        idx[k] = -m[k];
    }
    loop {
        let r2: f64 = (0..d).map(|k| (idx[k] as f64 * h[k]).powi(2)).sum();
        if r2 < t * t || idx.iter().all(|&v| v == 0) {
            count += 1;
        }
        let mut k = d;
        loop {
            if k == 0 {
                return count;
            }
            k -= 1;
            if idx[k] < m[k] {
                idx[k] += 1;
                break;
            }
            idx[k] = -m[k];
        }
    }
}

impl GridOperator for ConvolutionMaximal {
    fn grid(&self) -> &Grid {
        self.conv.grid()
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.grid().len() {
            return Err(LabError::Precondition("field length does not match the grid".into()));
        }
        let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
        let total = self.spectra.len() / self.count;
        let mut out = vec![0.0f64; f.len()];
        for k in 0..self.count {
            let g = self.conv.apply(&self.spectra[k * total..(k + 1) * total], &abs);
            for (o, v) in out.iter_mut().zip(g) {
                *o = o.max(v);
            }
        }
        Ok(out)
    }
}

/// `sup_t e^{-tL_h}|f|` for a 1-D finite-difference semigroup.
pub struct DiscreteHeatMaximal {
    pub semigroup: Arc<DiscreteSemigroup>,
    pub times: Vec<f64>,
}

impl GridOperator for DiscreteHeatMaximal {
    fn grid(&self) -> &Grid {
        self.semigroup.grid()
    }
    fn label(&self) -> String {
        "heat-maximal-discrete".into()
    }
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
        let mut out = vec![0.0f64; f.len()];
        for &t in &self.times {
            for (o, v) in out.iter_mut().zip(self.semigroup.apply(t, &abs)?) {
                *o = o.max(v);
            }
        }
        Ok(out)
    }
}

/// Candidate functions for [`weighted_norm_lower_bound`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateConfig {
    /// Balls carrying `(w + ε)^{-1/(p-1)} 1_B` and `1_B`.
    pub balls: EuclideanBallFamily,
    pub random_fields: usize,
    pub seed: u64,
    pub eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormCandidate {
    pub label: String,
    pub ratio: f64,
}

/// Largest ratio `‖Tf‖_{L^p(w)} / ‖f‖_{L^p(w)}` found; a lower bound for the operator norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormBound {
    pub operator: String,
    pub p: f64,
    pub bound: f64,
    /// Index into `candidates` of the maximizer (lowest index on ties).
    pub best: usize,
    pub candidates: Vec<NormCandidate>,
}

impl NormBound {
    pub fn best_label(&self) -> &str {
        &self.candidates[self.best].label
    }
}

/// `ln Σ_i |g_i|^p w_i` over cell values, in log form.
pub fn ln_weighted_norm_p(g: &[f64], ln_w: &[f64], p: f64) -> f64 {
    let mut s = LogSum::default();
    for (v, lw) in g.iter().zip(ln_w) {
        if *v != 0.0 {
            s.add(p * v.abs().ln() + lw);
        }
    }
    s.value()
}

/// Explicit candidate functions, labelled.
pub fn candidate_fields(table: &WeightTable, cfg: &CandidateConfig) -> Result<Vec<(String, Vec<f64>)>> {
    let grid = &table.grid;
    let mut out = Vec::new();
    for (bi, b) in cfg.balls.balls.iter().enumerate() {
        let nodes = grid.nodes_in_ball(&b.center, b.radius);
        if nodes.is_empty() {
            continue;
        }
        let mut adv = vec![0.0; grid.len()];
        let mut ind = vec![0.0; grid.len()];
        for &i in &nodes {
            let w = table.ln_w[i].exp();
            let v = (w + cfg.eps).powf(-1.0 / (table.p - 1.0));
            if !v.is_finite() {
                return Err(LabError::WeightValidity { point: grid.point(i), reason: "(w + ε)^{-1/(p-1)} overflows".into() });
            }
            adv[i] = v;
            ind[i] = 1.0;
        }
        out.push((format!("adversarial[{bi}]"), adv));
        out.push((format!("indicator[{bi}]"), ind));
    }
    for k in 0..cfg.random_fields {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        out.push((format!("random[{k}]"), (0..grid.len()).map(|_| rng.gen::<f64>()).collect()));
    }
    if out.is_empty() {
        return Err(LabError::Config("no candidate functions: every ball misses the grid".into()));
    }
    Ok(out)
}

/// Ratios for given candidate fields against a weight table.
pub fn norm_ratios(op: &dyn GridOperator, table: &WeightTable, fields: &[(String, Vec<f64>)]) -> Result<NormBound> {
    if op.grid().counts() != table.grid.counts() {
        return Err(LabError::Precondition("operator and weight grids differ".into()));
    }
    let p = table.p;
    let ratios = par::try_map_range(fields.len(), |k| {
        let f = &fields[k].1;
        let tf = op.apply(f)?;
        let num = ln_weighted_norm_p(&tf, &table.ln_w, p);
        let den = ln_weighted_norm_p(f, &table.ln_w, p);
        if !den.is_finite() {
            return Ok(0.0);
        }
        Ok::<_, LabError>(((num - den) / p).exp())
    })?;
    let mut best = 0;
    for (k, &r) in ratios.iter().enumerate() {
        if r > ratios[best] {
            best = k;
        }
    }
    Ok(NormBound {
        operator: op.label(),
        p,
        bound: ratios[best],
        best,
        candidates: fields.iter().zip(&ratios).map(|((l, _), &r)| NormCandidate { label: l.clone(), ratio: r }).collect(),
    })
}

/// Max over candidates of `‖Tf‖_{L^p(w)} / ‖f‖_{L^p(w)}` with cell-sum norms.
pub fn weighted_norm_lower_bound(op: &dyn GridOperator, p: f64, w: &Weight, cfg: &CandidateConfig) -> Result<NormBound> {
    if !(p > 1.0) {
        return Err(LabError::Config(format!("p must exceed 1, got {p}")));
    }
    let table = WeightTable::new(w, op.grid(), p)?;
    let fields = candidate_fields(&table, cfg)?;
    norm_ratios(op, &table, &fields)
}

/// Nodes whose coordinates all lie within `margin` of the center of the box.
pub fn central_nodes(grid: &Grid, half_width: f64) -> Vec<usize> {
    let mid: Vec<f64> = (0..grid.dim()).map(|k| 0.5 * (grid.lo()[k] + grid.hi()[k])).collect();
    (0..grid.len())
        .filter(|&i| {
            let p = grid.point(i);
            p.iter().zip(&mid).all(|(x, m)| (x - m).abs() <= half_width + 1e-12)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agmon::SolverMethod;
    use crate::potentials::Potential;
    use approx::assert_relative_eq;

    fn const_provider(grid: &Grid, rho0: f64) -> DistanceProvider {
        let rho = CriticalRadiusField::from_fn(grid, |_| rho0).unwrap();
        DistanceProvider::new(rho, SolverMethod::ConstantMetric)
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1, 10.0, 5).unwrap();
        assert_relative_eq!(g[0], 0.1);
        assert_relative_eq!(g[4], 10.0, max_relative = 1e-14);
        assert_relative_eq!(g[2], 1.0, max_relative = 1e-14);
        assert!(log_grid(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn adapted_on_constant_is_tmin_damping() {
        let grid = Grid::cube_points(2, -1.0, 1.0, 21).unwrap();
        let prov = const_provider(&grid, 0.5);
        let f = ScalarField::from_fn(&grid, |_| 1.0);
        let radii = log_grid(0.05, 1.0, 12).unwrap();
        let points = central_nodes(&grid, 0.3);
        let c = 0.7;
        for mode in [Centering::Centered, Centering::Uncentered] {
            let s = BallSearch { mode, radii: radii.clone(), points: points.clone(), centers: Some(central_nodes(&grid, 0.5)) };
            let m = maximal_adapted(&f, &prov, c, &s).unwrap();
            for v in &m.values {
                assert_relative_eq!(*v, (-c * radii[0]).exp(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn adapted_matches_direct_euclidean_for_constant_rho() {
        let grid = Grid::cube_points(2, -1.0, 1.0, 33).unwrap();
        let rho0 = 0.4;
        let prov = const_provider(&grid, rho0);
        let f = ScalarField::from_fn(&grid, |x| (-4.0 * (x[0] - 0.2).powi(2) - 9.0 * x[1] * x[1]).exp());
        let radii = log_grid(0.1, 2.0, 20).unwrap();
        let points = central_nodes(&grid, 0.25);
        let c = 0.5;
        let s = BallSearch { mode: Centering::Centered, radii: radii.clone(), points: points.clone(), centers: None };
        let a = maximal_adapted(&f, &prov, c, &s).unwrap();
        let euclid: Vec<f64> = radii.iter().map(|r| r * rho0).collect();
        let b = maximal_euclidean_direct(&f, |t| (-c * t / rho0).exp(), &euclid, &points).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn maximal_is_sublinear_and_homogeneous() {
        let grid = Grid::cube_points(2, -1.0, 1.0, 17).unwrap();
        let rho = CriticalRadiusField::from_fn(&grid, |x| 1.0 / (1.0 + crate::grid::norm(x))).unwrap();
        let f = ScalarField::from_fn(&grid, |x| (x[0] * 3.0).sin().abs());
        let g = ScalarField::from_fn(&grid, |x| if x[1] > 0.2 { 1.0 } else { 0.0 });
        let fg = ScalarField::new(grid.clone(), f.values.iter().zip(&g.values).map(|(a, b)| a + b).collect()).unwrap();
        let f3 = ScalarField::new(grid.clone(), f.values.iter().map(|a| 3.0 * a).collect()).unwrap();
        let s = BallSearch { mode: Centering::Uncentered, radii: log_grid(0.1, 0.8, 10).unwrap(), points: central_nodes(&grid, 0.2), centers: None };
        let m = |h: &ScalarField| maximal_phi(h, &rho, 0.5, 1.0, &s).unwrap().values;
        let (mf, mg, mfg, m3) = (m(&f), m(&g), m(&fg), m(&f3));
        for k in 0..mf.len() {
            assert!(mfg[k] <= mf[k] + mg[k] + 1e-12);
            assert_relative_eq!(m3[k], 3.0 * mf[k], max_relative = 1e-13);
            assert!(mf[k] <= mfg[k] + 1e-15);
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let grid = Grid::cube_points(3, -1.0, 1.0, 7).unwrap();
        let conv = Convolver::new(&grid);
        let kern = |d: &[f64]| (-(d[0] - 0.1 * d[1]).powi(2)).exp() * (1.0 + d[2]);
        let spec = conv.spectrum(kern);
        let f: Vec<f64> = (0..grid.len()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let out = conv.apply(&spec, &f);
        for i in [0usize, 17, 171, grid.len() - 1] {
            let x = grid.point(i);
            let direct: f64 = (0..grid.len())
                .map(|j| {
                    let y = grid.point(j);
                    let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                    kern(&d) * f[j]
                })
                .sum::<f64>()
                * grid.cell_volume();
            assert_relative_eq!(out[i], direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn riesz_odd_and_linear() {
        let grid = Grid::cube_points(3, -2.0, 2.0, 17).unwrap();
        let op = RieszConstant::new(&grid, 1.0, 0, None).unwrap();
        let f = ScalarField::from_fn(&grid, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2])).exp());
        let rf = op.apply(&f.values).unwrap();
        let center = grid.nearest(&[0.0, 0.0, 0.0]);
        let scale = rf.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(rf[center].abs() < 1e-12 * scale);
        let g: Vec<f64> = (0..grid.len()).map(|i| ((i * 13) % 7) as f64).collect();
        let rg = op.apply(&g).unwrap();
        let comb: Vec<f64> = f.values.iter().zip(&g).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let rc = op.apply(&comb).unwrap();
        let gs = rg.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..grid.len() {
            assert!((rc[i] - (2.0 * rf[i] - 0.5 * rg[i])).abs() < 1e-12 * (scale + gs));
        }
    }

    #[test]
    fn identity_bound_is_one_and_scale_invariant() {
        let grid = Grid::cube_points(2, -1.0, 1.0, 17).unwrap();
        let fam = crate::grid::sample_ball_family(&grid, 4, &crate::grid::RadiusLaw::Fixed { r: 0.3 }, 3, 0.3).unwrap();
        let cfg = CandidateConfig { balls: fam, random_fields: 2, seed: 1, eps: 0.0 };
        let w = Weight::exp_linear(1.5, 0);
        let b = weighted_norm_lower_bound(&Identity { grid: grid.clone() }, 2.0, &w, &cfg).unwrap();
        for c in &b.candidates {
            assert_relative_eq!(c.ratio, 1.0, max_relative = 1e-12);
        }
        let op = ConvolutionMaximal::constant_hl(&grid, 1.0, 0.1, &log_grid(0.1, 0.6, 6).unwrap()).unwrap();
        let t1 = WeightTable::new(&w, &grid, 2.0).unwrap();
        let mut t2 = t1.clone();
        for v in &mut t2.ln_w {
            *v += 7.3f64.ln();
        }
        let fields = candidate_fields(&t1, &cfg).unwrap();
        let a = norm_ratios(&op, &t1, &fields).unwrap();
        let b = norm_ratios(&op, &t2, &fields).unwrap();
        for (x, y) in a.candidates.iter().zip(&b.candidates) {
            assert_relative_eq!(x.ratio, y.ratio, max_relative = 1e-12);
        }
    }

    #[test]
    fn heat_maximal_of_one_constant() {
        let grid = Grid::cube_points(1, -30.0, 30.0, 1201).unwrap();
        let f = ScalarField::from_fn(&grid, |_| 1.0);
        let times = log_grid(0.05, 2.0, 10).unwrap();
        let points = vec![grid.nearest(&[0.0]), grid.nearest(&[3.0])];
        let m = heat_maximal(&f, &HeatFamily::Constant { n: 2.0 }, &times, &points).unwrap();
        for v in &m.values {
            assert_relative_eq!(*v, (-2.0 * 0.05f64).exp(), max_relative = 1e-6);
        }
        let free = heat_maximal(&f, &HeatFamily::Constant { n: 0.0 }, &times, &points).unwrap();
        let meh = heat_maximal(&f, &HeatFamily::Mehler, &times, &points).unwrap();
        for k in 0..2 {
            assert!(meh.values[k] <= free.values[k] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn heat_maximal_unresolved_times_bounded_by_sup() {
        let grid = Grid::cube(1, -6.0, 6.0, 0.0625).unwrap();
        let f = ScalarField::from_fn(&grid, |x| (-4.0 * x[0] * x[0]).exp());
        let times = log_grid(1e-5, 5.0, 40).unwrap();
        let points: Vec<usize> = (0..grid.len()).step_by(7).collect();
        for fam in [HeatFamily::Mehler, HeatFamily::Constant { n: 0.0 }] {
            let m = heat_maximal(&f, &fam, &times, &points).unwrap();
            for (&v, &p) in m.values.iter().zip(&points) {
                assert!(v <= 1.0 + 1e-9 && v >= f.values[p] - 1e-12);
            }
        }
    }

    #[test]
    fn discrete_heat_maximal_matches_table() {
        let grid = Grid::cube_points(1, -5.0, 5.0, 81).unwrap();
        let sg = Arc::new(DiscreteSemigroup::new(&Potential::harmonic(1), &grid).unwrap());
        let f: Vec<f64> = (0..grid.len()).map(|i| if (30..50).contains(&i) { 1.0 } else { 0.0 }).collect();
        let k = sg.kernel(0.4).unwrap();
        let u = sg.apply(0.4, &f).unwrap();
        for i in [10usize, 40, 70] {
            let direct: f64 = k.row(i).iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() * grid.spacing()[0];
            assert_relative_eq!(u[i], direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn constant_hl_of_one() {
        let grid = Grid::cube_points(2, -2.0, 2.0, 33).unwrap();
        let radii = log_grid(0.2, 1.0, 6).unwrap();
        let op = ConvolutionMaximal::constant_hl(&grid, 4.0, 0.5, &radii).unwrap();
        let out = op.apply(&vec![1.0; grid.len()]).unwrap();
        let c = grid.nearest(&[0.0, 0.0]);
        assert_relative_eq!(out[c], (-0.5 * 2.0 * 0.2f64).exp(), max_relative = 1e-10);
    }
}
