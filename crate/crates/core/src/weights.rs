//! Weights and the four class-constant estimators.
//!
//! All ball sums are accumulated in log form so that exponential weights on
//! large domains neither overflow nor underflow. For a ball `B` with cell
//! sums `W = Σ_B w`, `Σ = Σ_B w^{-1/(p-1)}` and cell-count volume `|B|`, the
//! per-ball quantity is
//! `(W / (|B| D))^{1/p} (Σ / (|B| D))^{(p-1)/p}` with the class damping `D`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agmon::{AgmonField, DistanceProvider};
use crate::critical_radius::CriticalRadiusField;
use crate::error::{LabError, Result};
use crate::estimate::{BallWitness, ClassConstantEstimate, ClassTag, LogSum, Verdict};
use crate::grid::{self, Ball, EuclideanBallFamily, Grid, ScalarField};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKind {
    One,
    /// `|x|^a`.
    Power { a: f64 },
    /// `exp(b ⟨x, e_axis⟩)`.
    ExpLinear { b: f64, axis: usize },
    /// `exp(ε u(x))` with `u` an Agmon distance field.
    ExpAgmon { eps: f64, distance: Arc<ScalarField> },
    /// `exp(a |x|²)`.
    Gaussian { a: f64 },
    /// `exp(b |x|)`.
    ExpRadial { b: f64 },
    Tabulated { field: Arc<ScalarField> },
}

/// A positive weight on `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub kind: WeightKind,
}

impl Weight {
    pub fn one() -> Self {
        Self { kind: WeightKind::One }
    }
    pub fn power(a: f64) -> Self {
        Self { kind: WeightKind::Power { a } }
    }
    pub fn exp_linear(b: f64, axis: usize) -> Self {
        Self { kind: WeightKind::ExpLinear { b, axis } }
    }
    pub fn gaussian(a: f64) -> Self {
        Self { kind: WeightKind::Gaussian { a } }
    }
    pub fn exp_radial(b: f64) -> Self {
        Self { kind: WeightKind::ExpRadial { b } }
    }
    pub fn exp_agmon(eps: f64, field: &AgmonField) -> Self {
        Self { kind: WeightKind::ExpAgmon { eps, distance: Arc::new(field.distances.clone()) } }
    }

    /// Parses `one`, `pow:a`, `explin:b[,axis]`, `gauss:a`, `exprad:b`,
    /// `tab:<path>`. Agmon weights need a distance field and are built with
    /// [`Weight::exp_agmon`]; `agmon:eps` is parsed into [`WeightSpec::Agmon`].
    pub fn parse(spec: &str) -> Result<WeightSpec> {
        let bad = |m: String| LabError::Parse { field: "weight".into(), message: m };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a)),
            None => (spec.trim(), None),
        };
        let w = match (head, arg) {
            ("one", None) => Weight::one(),
            ("pow", Some(a)) => Weight::power(num(a)?),
            ("gauss", Some(a)) => Weight::gaussian(num(a)?),
            ("exprad", Some(a)) => Weight::exp_radial(num(a)?),
            ("explin", Some(a)) => {
                let parts: Vec<&str> = a.split(',').collect();
                let axis = match parts.get(1) {
                    Some(s) => s.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?,
                    None => 0,
                };
                Weight::exp_linear(num(parts[0])?, axis)
            }
            ("agmon", Some(a)) => return Ok(WeightSpec::Agmon { eps: num(a)? }),
            ("tab", Some(p)) => Weight { kind: WeightKind::Tabulated { field: Arc::new(ScalarField::read_csv(std::path::Path::new(p.trim()))?) } },
            _ => return Err(bad(format!("unrecognised spec `{spec}`"))),
        };
        Ok(WeightSpec::Ready(w))
    }

    /// `ln w(x)`.
    pub fn ln_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            WeightKind::One => 0.0,
            WeightKind::Power { a } => a * grid::norm(x).ln(),
            WeightKind::ExpLinear { b, axis } => b * x[*axis],
            WeightKind::ExpAgmon { eps, distance } => eps * distance.interpolate(x),
            WeightKind::Gaussian { a } => a * x.iter().map(|v| v * v).sum::<f64>(),
            WeightKind::ExpRadial { b } => b * grid::norm(x),
            WeightKind::Tabulated { field } => field.interpolate(x).ln(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.ln_value(x).exp()
    }

    /// Whether point values may be infinite inside cells (power weights).
    fn singular(&self) -> bool {
        matches!(self.kind, WeightKind::Power { .. })
    }

    /// Returns `λ w`.
    pub fn scaled(&self, lambda: f64) -> ScaledWeight<'_> {
        ScaledWeight { base: self, ln_lambda: lambda.ln() }
    }
}

/// A parsed weight spec; Agmon weights still need their distance field.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Ready(Weight),
    Agmon { eps: f64 },
}

/// `λ w` for scaling-invariance checks.
pub struct ScaledWeight<'a> {
    base: &'a Weight,
    ln_lambda: f64,
}

/// Cell-averaged `ln w` and `ln w^{-1/(p-1)}` at every node.
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub grid: Grid,
    pub p: f64,
    pub ln_w: Vec<f64>,
    pub ln_sigma: Vec<f64>,
}

impl WeightTable {
    /// Node values for smooth weights; power weights are averaged over
    /// `4^d` sub-cells so the singularity at the origin stays integrable.
    pub fn new(w: &Weight, grid: &Grid, p: f64) -> Result<Self> {
        Self::build(grid, p, w.singular(), |x| w.ln_value(x))
    }

    pub fn new_scaled(w: &ScaledWeight<'_>, grid: &Grid, p: f64) -> Result<Self> {
        let l = w.ln_lambda;
        Self::build(grid, p, w.base.singular(), |x| w.base.ln_value(x) + l)
    }

    fn build<F>(grid: &Grid, p: f64, singular: bool, lnw: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        if !(p > 1.0) {
            return Err(LabError::Config(format!("exponent p must exceed 1, got {p}")));
        }
        let s = 1.0 / (p - 1.0);
        let d = grid.dim();
        let h = grid.spacing().to_vec();
        let pairs = par::map_range(grid.len(), |i| {
            let x = grid.point(i);
            if !singular {
                let l = lnw(&x);
                return (l, -s * l);
            }
            let sub = 4usize;
            let total = sub.pow(d as u32);
            let mut a = LogSum::default();
            let mut b = LogSum::default();
            let mut q = vec![0.0; d];
            for k in 0..total {
                let mut t = k;
                for j in 0..d {
                    q[j] = x[j] - 0.5 * h[j] + (((t % sub) as f64) + 0.5) * h[j] / sub as f64;
                    t /= sub;
                }
                let l = lnw(&q);
                a.add(l);
                b.add(-s * l);
            }
            let ln_n = (total as f64).ln();
            (a.value() - ln_n, b.value() - ln_n)
        });
        let (ln_w, ln_sigma): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(i) = (0..ln_w.len()).find(|&i| !ln_w[i].is_finite() || !ln_sigma[i].is_finite()) {
            return Err(LabError::WeightValidity {
                point: grid.point(i),
                reason: format!("w or w^(-1/(p-1)) is not finite (ln w = {})", ln_w[i]),
            });
        }
        Ok(Self { grid: grid.clone(), p, ln_w, ln_sigma })
    }

    /// Log cell sums `(ln W, ln Σ, cells)` over the nodes `|y − x| < r`.
    pub fn euclidean_sums(&self, center: &[f64], r: f64) -> (f64, f64, usize) {
        let g = &self.grid;
        let mut a = LogSum::default();
        let mut b = LogSum::default();
        let mut n = 0;
        if let Some((lo, hi)) = g.index_window(center, r) {
            let r2 = r * r;
            g.for_each_in_box(&lo, &hi, |i, p| {
                let d2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                if d2 < r2 {
                    a.add(self.ln_w[i]);
                    b.add(self.ln_sigma[i]);
                    n += 1;
                }
            });
        }
        (a.value(), b.value(), n)
    }

    /// `ln` of the undamped product `(W/|B|)^{1/p} (Σ/|B|)^{(p-1)/p}` from
    /// log node sums; the cell volume cancels.
    pub fn ln_product(&self, ln_w: f64, ln_sigma: f64, cells: usize) -> f64 {
        let ln_n = (cells as f64).ln();
        let p = self.p;
        (ln_w - ln_n) / p + (p - 1.0) / p * (ln_sigma - ln_n)
    }
}

/// Distances sorted from one source with running log sums of the weight
/// tables along that order.
struct MetricPrefix {
    dist: Vec<f64>,
    ln_w: Vec<f64>,
    ln_sigma: Vec<f64>,
    unclipped: f64,
}

impl MetricPrefix {
    fn new(field: &AgmonField, table: &WeightTable) -> Self {
        let s = field.sorted();
        let mut a = LogSum::default();
        let mut b = LogSum::default();
        let mut ln_w = Vec::with_capacity(s.order.len());
        let mut ln_sigma = Vec::with_capacity(s.order.len());
        for &i in &s.order {
            a.add(table.ln_w[i]);
            b.add(table.ln_sigma[i]);
            ln_w.push(a.value());
            ln_sigma.push(b.value());
        }
        Self { unclipped: s.unclipped_radius(), dist: s.dist, ln_w, ln_sigma }
    }

    /// `(ln W, ln Σ, cells)` for `u < r`, or `None` when empty or clipped.
    fn sums(&self, r: f64) -> Option<(f64, f64, usize)> {
        let n = self.dist.partition_point(|&u| u < r);
        if n == 0 || r > self.unclipped {
            return None;
        }
        Some((self.ln_w[n - 1], self.ln_sigma[n - 1], n))
    }
}

fn witness(family: &EuclideanBallFamily) -> impl Fn(usize) -> BallWitness + '_ {
    move |i| BallWitness { index: i, center: family.balls[i].center.clone(), radius: family.balls[i].radius }
}

fn check_common(p: f64, family: &EuclideanBallFamily) -> Result<()> {
    if !(p > 1.0) {
        return Err(LabError::Config(format!("exponent p must exceed 1, got {p}")));
    }
    if family.is_empty() {
        return Err(LabError::Config("ball family is empty".into()));
    }
    Ok(())
}

/// Per-ball log products over metric balls `B_ρ(x, r)` damped by `e^{cr}`.
/// Balls are grouped by centre so each centre needs one distance solve.
pub fn s_class_log_products(table: &WeightTable, c: &[f64], provider: &DistanceProvider, family: &EuclideanBallFamily) -> Result<(Vec<Vec<Option<f64>>>, Vec<String>)> {
    let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    let mut keys: Vec<Vec<u64>> = Vec::new();
    for (i, b) in family.balls.iter().enumerate() {
        let key: Vec<u64> = b.center.iter().map(|x| x.to_bits()).collect();
        groups.entry(key.clone()).or_insert_with(|| {
            keys.push(key.clone());
            Vec::new()
        }).push(i);
    }
    let per_group = par::try_map_range(keys.len(), |k| -> Result<Vec<(usize, Option<(f64, f64, usize)>)>> {
        let members = &groups[&keys[k]];
        let center = &family.balls[members[0]].center;
        let rmax = members.iter().map(|&i| family.balls[i].radius).fold(0.0, f64::max);
        let field = provider.solve_with_cutoff(center, rmax * 1.0001)?;
        let pre = MetricPrefix::new(&field, table);
        Ok(members.iter().map(|&i| (i, pre.sums(family.balls[i].radius))).collect())
    })?;
    let mut sums = vec![None; family.len()];
    for g in per_group {
        for (i, s) in g {
            sums[i] = s;
        }
    }
    let mut warnings = Vec::new();
    let out = c
        .iter()
        .map(|&cc| {
            sums.iter()
                .enumerate()
                .map(|(i, s)| s.map(|(a, b, n)| table.ln_product(a, b, n) - cc * family.balls[i].radius))
                .collect()
        })
        .collect();
    let skipped = sums.iter().filter(|s| s.is_none()).count();
    if skipped > 0 {
        let msg = format!("{skipped} metric ball(s) skipped: empty or clipped by the domain");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok((out, warnings))
}

/// `[w]_S` estimate over metric balls for one `c`.
pub fn s_class_constant(w: &Weight, p: f64, c: f64, provider: &DistanceProvider, family: &EuclideanBallFamily) -> Result<ClassConstantEstimate> {
    check_common(p, family)?;
    if !(c > 0.0) {
        return Err(LabError::Config(format!("damping c must be positive, got {c}")));
    }
    let table = WeightTable::new(w, provider.grid(), p)?;
    let (mut logs, warnings) = s_class_log_products(&table, &[c], provider, family)?;
    Ok(ClassConstantEstimate::from_log_values(ClassTag::S { p, c }, &logs.remove(0), witness(family), &family.checkpoints, warnings))
}

/// S-class estimates for a panel of `c` values sharing the distance solves.
pub fn s_class_panel(w: &Weight, p: f64, cs: &[f64], provider: &DistanceProvider, family: &EuclideanBallFamily) -> Result<Vec<ClassConstantEstimate>> {
    check_common(p, family)?;
    let table = WeightTable::new(w, provider.grid(), p)?;
    let (logs, warnings) = s_class_log_products(&table, cs, provider, family)?;
    Ok(cs
        .iter()
        .zip(logs)
        .map(|(&c, l)| ClassConstantEstimate::from_log_values(ClassTag::S { p, c }, &l, witness(family), &family.checkpoints, warnings.clone()))
        .collect())
}

/// Euclidean-ball sums for every ball in the family; `None` when the ball
/// leaves the grid box or holds no node.
pub fn euclidean_family_sums(table: &WeightTable, family: &EuclideanBallFamily) -> Vec<Option<(f64, f64, usize)>> {
    let g = &table.grid;
    par::map_range(family.len(), |i| {
        let b = &family.balls[i];
        if g.distance_to_boundary(&b.center) < b.radius {
            return None;
        }
        let (a, s, n) = table.euclidean_sums(&b.center, b.radius);
        (n > 0).then_some((a, s, n))
    })
}

/// Damping for the Euclidean classes, as a log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Damping {
    /// `c (1 + r/ρ(x))^m`.
    Phi { c: f64, m: f64 },
    /// `θ ln(1 + r/ρ(x))`.
    Polynomial { theta: f64 },
}

impl Damping {
    pub fn ln(&self, r: f64, rho_x: f64) -> f64 {
        match *self {
            Damping::Phi { c, m } => c * (1.0 + r / rho_x).powf(m),
            Damping::Polynomial { theta } => theta * (r / rho_x).ln_1p(),
        }
    }
}

fn euclidean_estimate(
    tag: ClassTag,
    table: &WeightTable,
    sums: &[Option<(f64, f64, usize)>],
    rho: &CriticalRadiusField,
    damping: Damping,
    family: &EuclideanBallFamily,
    keep: impl Fn(&Ball, f64) -> bool,
    mut warnings: Vec<String>,
) -> ClassConstantEstimate {
    let mut filtered = 0;
    let logs: Vec<Option<f64>> = sums
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let b = &family.balls[i];
            let rx = rho.rho.interpolate(&b.center);
            if !keep(b, rx) {
                filtered += 1;
                return None;
            }
            s.map(|(a, sg, n)| table.ln_product(a, sg, n) - damping.ln(b.radius, rx))
        })
        .collect();
    let clipped = sums.iter().filter(|s| s.is_none()).count();
    if clipped > 0 {
        let msg = format!("{clipped} ball(s) skipped: clipped by the domain");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if filtered > 0 {
        warnings.push(format!("{filtered} ball(s) filtered out by the radius restriction"));
    }
    ClassConstantEstimate::from_log_values(tag, &logs, witness(family), &family.checkpoints, warnings)
}

fn check_rho_grid(rho: &CriticalRadiusField, grid: &Grid) -> Result<()> {
    if rho.grid().dim() != grid.dim() {
        return Err(LabError::Dimension { dim: grid.dim(), reason: "weight grid and ρ field differ in dimension".into() });
    }
    Ok(())
}

/// `[w]_H` estimate over Euclidean balls damped by `Φ = exp(c(1 + r/ρ(x))^m)`.
pub fn h_class_constant(w: &Weight, p: f64, c: f64, m: f64, rho: &CriticalRadiusField, grid: &Grid, family: &EuclideanBallFamily) -> Result<ClassConstantEstimate> {
    check_common(p, family)?;
    if !(c > 0.0 && m > 0.0) {
        return Err(LabError::Config(format!("need c > 0 and m > 0, got c = {c}, m = {m}")));
    }
    check_rho_grid(rho, grid)?;
    let table = WeightTable::new(w, grid, p)?;
    let sums = euclidean_family_sums(&table, family);
    Ok(euclidean_estimate(ClassTag::H { p, c, m }, &table, &sums, rho, Damping::Phi { c, m }, family, |_, _| true, vec![]))
}

/// `A_p^{ρ,θ}` estimate: Euclidean balls damped by `(1 + r/ρ(x))^θ`.
pub fn ap_theta_constant(w: &Weight, p: f64, theta: f64, rho: &CriticalRadiusField, grid: &Grid, family: &EuclideanBallFamily) -> Result<ClassConstantEstimate> {
    check_common(p, family)?;
    if !(theta >= 0.0) {
        return Err(LabError::Config(format!("θ must be nonnegative, got {theta}")));
    }
    check_rho_grid(rho, grid)?;
    let table = WeightTable::new(w, grid, p)?;
    let sums = euclidean_family_sums(&table, family);
    Ok(euclidean_estimate(ClassTag::ATheta { p, theta }, &table, &sums, rho, Damping::Polynomial { theta }, family, |_, _| true, vec![]))
}

/// `A_p^{ρ,loc}` estimate: undamped, only balls with `r ≤ ρ(x)`.
pub fn ap_loc_constant(w: &Weight, p: f64, rho: &CriticalRadiusField, grid: &Grid, family: &EuclideanBallFamily) -> Result<ClassConstantEstimate> {
    check_common(p, family)?;
    check_rho_grid(rho, grid)?;
    let table = WeightTable::new(w, grid, p)?;
    let sums = euclidean_family_sums(&table, family);
    Ok(euclidean_estimate(ClassTag::ALoc { p }, &table, &sums, rho, Damping::Polynomial { theta: 0.0 }, family, |b, rx| b.radius <= rx, vec![]))
}

/// Panel evaluation of the Euclidean classes sharing one set of ball sums.
pub struct EuclideanPanel<'a> {
    table: WeightTable,
    sums: Vec<Option<(f64, f64, usize)>>,
    rho: &'a CriticalRadiusField,
    family: &'a EuclideanBallFamily,
}

impl<'a> EuclideanPanel<'a> {
    pub fn new(w: &Weight, p: f64, rho: &'a CriticalRadiusField, grid: &Grid, family: &'a EuclideanBallFamily) -> Result<Self> {
        check_common(p, family)?;
        check_rho_grid(rho, grid)?;
        let table = WeightTable::new(w, grid, p)?;
        let sums = euclidean_family_sums(&table, family);
        Ok(Self { table, sums, rho, family })
    }

    pub fn h(&self, c: f64, m: f64) -> ClassConstantEstimate {
        let p = self.table.p;
        euclidean_estimate(ClassTag::H { p, c, m }, &self.table, &self.sums, self.rho, Damping::Phi { c, m }, self.family, |_, _| true, vec![])
    }

    pub fn a_theta(&self, theta: f64) -> ClassConstantEstimate {
        let p = self.table.p;
        euclidean_estimate(ClassTag::ATheta { p, theta }, &self.table, &self.sums, self.rho, Damping::Polynomial { theta }, self.family, |_, _| true, vec![])
    }

    pub fn a_loc(&self) -> ClassConstantEstimate {
        let p = self.table.p;
        euclidean_estimate(ClassTag::ALoc { p }, &self.table, &self.sums, self.rho, Damping::Polynomial { theta: 0.0 }, self.family, |b, rx| b.radius <= rx, vec![])
    }

    /// Undamped per-ball log products (for the averaging-inequality floor).
    pub fn undamped(&self) -> Vec<Option<f64>> {
        self.sums.iter().map(|s| s.map(|(a, b, n)| self.table.ln_product(a, b, n))).collect()
    }
}

/// Parameters of the inclusion experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionParams {
    pub p: f64,
    pub k0: f64,
    pub thetas: Vec<f64>,
    /// Damping constants tried for the S and H classes.
    pub cs: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
}

impl InclusionParams {
    /// `m₁ = 0.8/(k₀+1)`, `m₂ = 1.2(k₀+1)`.
    pub fn from_k0(p: f64, k0: f64, thetas: Vec<f64>, cs: Vec<f64>) -> Self {
        Self { p, k0, thetas, cs, m1: 0.8 / (k0 + 1.0), m2: 1.2 * (k0 + 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub estimates: Vec<ClassConstantEstimate>,
    /// Plateau if some parameter in the panel plateaus, divergence if all
    /// diverge, otherwise inconclusive.
    pub verdict: Verdict,
}

impl ClassRow {
    fn new(label: &str, estimates: Vec<ClassConstantEstimate>) -> Self {
        let verdict = if estimates.iter().any(|e| e.verdict == Verdict::Plateau) {
            Verdict::Plateau
        } else if estimates.iter().all(|e| e.verdict == Verdict::Divergence) {
            Verdict::Divergence
        } else {
            Verdict::Inconclusive
        };
        Self { label: label.into(), estimates, verdict }
    }

    /// Smallest panel parameter whose trace plateaus, with every larger
    /// parameter also plateauing.
    pub fn threshold(&self, param: impl Fn(&ClassTag) -> f64) -> Option<f64> {
        let mut pairs: Vec<(f64, Verdict)> = self.estimates.iter().map(|e| (param(&e.class), e.verdict)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut thr = None;
        for &(c, v) in pairs.iter().rev() {
            if v == Verdict::Plateau {
                thr = Some(c);
            } else {
                break;
            }
        }
        thr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionRow {
    pub weight: String,
    pub a_theta: ClassRow,
    pub h_m1: ClassRow,
    pub s: ClassRow,
    pub h_m2: ClassRow,
    pub a_loc: ClassRow,
    /// Each plateauing inner class has plateauing outer classes.
    pub consistent: bool,
}

/// Traces of every class for one weight, and the chain consistency check
/// `A^{ρ,∞} ⊂ H^{m₁} ⊂ S ⊂ H^{m₂}`, `S ⊂ A^{ρ,loc}`.
pub fn inclusion_experiment(
    label: &str,
    w: &Weight,
    params: &InclusionParams,
    provider: &DistanceProvider,
    metric_family: &EuclideanBallFamily,
    euclid_family: &EuclideanBallFamily,
) -> Result<InclusionRow> {
    let rho = &provider.rho;
    let grid = provider.grid();
    let panel = EuclideanPanel::new(w, params.p, rho, grid, euclid_family)?;
    let a_theta = ClassRow::new("a-theta", params.thetas.iter().map(|&t| panel.a_theta(t)).collect());
    let h_m1 = ClassRow::new("h-m1", params.cs.iter().map(|&c| panel.h(c, params.m1)).collect());
    let h_m2 = ClassRow::new("h-m2", params.cs.iter().map(|&c| panel.h(c, params.m2)).collect());
    let a_loc = ClassRow::new("a-loc", vec![panel.a_loc()]);
    let s = ClassRow::new("s", s_class_panel(w, params.p, &params.cs, provider, metric_family)?);
    let plat = |r: &ClassRow| r.verdict == Verdict::Plateau;
    let consistent = (!plat(&a_theta) || plat(&h_m1)) && (!plat(&h_m1) || plat(&s)) && (!plat(&s) || plat(&h_m2)) && (!plat(&s) || plat(&a_loc));
    Ok(InclusionRow { weight: label.into(), a_theta, h_m1, s, h_m2, a_loc, consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agmon::SolverMethod;
    use crate::grid::RadiusLaw;

    fn setup_1d() -> (DistanceProvider, Grid) {
        let g = Grid::cube(1, -20.0, 20.0, 0.01).unwrap();
        let rho = CriticalRadiusField::from_fn(&g, |_| 1.0).unwrap();
        (DistanceProvider::new(rho, SolverMethod::ConstantMetric), g)
    }

    #[test]
    fn unit_weight_values() {
        let (prov, g) = setup_1d();
        let fam = EuclideanBallFamily::from_balls(vec![
            Ball { center: vec![0.0], radius: 0.5 },
            Ball { center: vec![1.0], radius: 2.0 },
        ])
        .unwrap();
        let s = s_class_constant(&Weight::one(), 2.0, 0.7, &prov, &fam).unwrap();
        assert!((s.log_value - (-0.7 * 0.5)).abs() < 1e-12);
        let a = ap_theta_constant(&Weight::one(), 2.0, 3.0, &prov.rho, &g, &fam).unwrap();
        assert!((a.log_value - 3.0 * -(1.5f64.ln())).abs() < 1e-12);
        let l = ap_loc_constant(&Weight::one(), 2.0, &prov.rho, &g, &fam).unwrap();
        assert!(l.log_value.abs() < 1e-12);
        assert_eq!(l.skipped, 1);
    }

    #[test]
    fn exp_linear_matches_closed_form_in_1d() {
        // Per metric ball of radius R: (sinh(bR)/(bR)) e^{-cR} with ρ ≡ 1.
        let (prov, _) = setup_1d();
        let b = 0.8;
        let fam = EuclideanBallFamily::from_balls(vec![Ball { center: vec![2.0], radius: 3.0 }]).unwrap();
        let e = s_class_constant(&Weight::exp_linear(b, 0), 2.0, 0.3, &prov, &fam).unwrap();
        let r = 3.0;
        let want = ((b * r).sinh() / (b * r)).ln() - 0.3 * r;
        // Whole-cell balls shift the effective radius by up to h/2.
        assert!((e.log_value - want).abs() < 5e-3, "{} {want}", e.log_value);
    }

    #[test]
    fn invalid_weight_is_reported() {
        let g = Grid::cube(1, -1.0, 1.0, 0.5).unwrap();
        let w = Weight { kind: WeightKind::Tabulated { field: Arc::new(ScalarField::from_fn(&g, |x| x[0])) } };
        assert!(matches!(WeightTable::new(&w, &g, 2.0), Err(LabError::WeightValidity { .. })));
        assert!(WeightTable::new(&Weight::power(-0.5), &g, 2.0).is_ok());
    }

    #[test]
    fn parse_weights() {
        assert_eq!(Weight::parse("pow:-2.5").unwrap(), WeightSpec::Ready(Weight::power(-2.5)));
        assert_eq!(Weight::parse("explin:4,0").unwrap(), WeightSpec::Ready(Weight::exp_linear(4.0, 0)));
        assert_eq!(Weight::parse("agmon:0.5").unwrap(), WeightSpec::Agmon { eps: 0.5 });
        assert!(Weight::parse("nope").is_err());
        let _ = RadiusLaw::Fixed { r: 1.0 };
    }
}
