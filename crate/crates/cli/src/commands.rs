//! Subcommand arguments and their runners.

use std::time::Instant;

use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use schrolab::agmon::{self, DistanceProvider, SolverMethod};
use schrolab::critical_radius;
use schrolab::estimate::ClassConstantEstimate;
use schrolab::grid::{self, Ball, EuclideanBallFamily, Grid, RadiusLaw};
use schrolab::kernels::{self, DiscreteSemigroup, KernelSpec};
use schrolab::operators::{self, BallSearch, CandidateConfig, Centering, HeatFamily, MaximalResult};
use schrolab::potentials::Potential;
use schrolab::suites::{self, Profile};
use schrolab::weights::{self, EuclideanPanel, InclusionParams, Weight, WeightSpec};
use schrolab::{LabError, Result};

use crate::report::{Outcome, Table};
use crate::specs::{self, FieldSpec, OpSpec, RhoSpec};

#[derive(Args, Debug, Clone, Serialize)]
pub struct GridArgs {
    /// Spatial dimension of the default grid.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Grid `dim:d;lo:a,..;hi:b,..;h:s,..` (`n:points` may replace `h`).
    #[arg(long)]
    pub grid: Option<String>,
}

impl GridArgs {
    /// The given grid, or the cube `[lo, hi]^d` with spacing `h`.
    fn resolve(&self, dim: usize, lo: f64, hi: f64, h: f64) -> Result<Grid> {
        match &self.grid {
            Some(s) => {
                let g: Grid = s.parse()?;
                if let Some(d) = self.dim {
                    if d != g.dim() {
                        return Err(LabError::Parse { field: "grid".into(), message: format!("grid has dimension {}, --dim is {d}", g.dim()) });
                    }
                }
                Ok(g)
            }
            None => Grid::cube(self.dim.unwrap_or(dim), lo, hi, h),
        }
    }
}

fn potential(spec: &str, dim: usize) -> Result<Potential> {
    Potential::parse(spec, dim)
}

fn method(spec: &str, rho: &RhoSpec, dim: usize) -> Result<SolverMethod> {
    if spec != "auto" {
        return spec.parse();
    }
    Ok(match rho {
        RhoSpec::Constant(_) => SolverMethod::ConstantMetric,
        _ if dim == 1 => SolverMethod::Exact1d,
        _ => SolverMethod::FastMarching,
    })
}

fn provider(rho_spec: &str, potential_spec: Option<&str>, grid: &Grid, method_spec: &str) -> Result<DistanceProvider> {
    let rs = RhoSpec::parse(rho_spec)?;
    let v = match potential_spec {
        Some(s) => Some(potential(s, grid.dim())?),
        None if rs.needs_potential() => return Err(LabError::Config("--potential is required for this --rho".into())),
        None => None,
    };
    let rho = rs.build(v.as_ref(), grid, 1e-4)?;
    let m = method(method_spec, &rs, rho.grid().dim())?;
    Ok(DistanceProvider::new(rho, m))
}

fn weight(spec: &str, prov: &DistanceProvider, source: &str) -> Result<Weight> {
    match Weight::parse(spec)? {
        WeightSpec::Ready(w) => Ok(w),
        WeightSpec::Agmon { eps } => {
            let src = specs::point("agmon-source", source, prov.grid().dim())?;
            Ok(Weight::exp_agmon(eps, &prov.solve(&src)?))
        }
    }
}

fn coord_header(d: usize, extra: &[&str]) -> Vec<String> {
    (1..=d).map(|k| format!("x{k}")).chain(extra.iter().map(|s| s.to_string())).collect()
}

fn table(name: &str, header: Vec<String>) -> Table {
    Table { name: name.into(), header, rows: Vec::new() }
}

fn with_coords(g: &Grid, i: usize, rest: impl IntoIterator<Item = f64>) -> Vec<f64> {
    g.point(i).into_iter().chain(rest).collect()
}

fn mid(g: &Grid) -> Vec<f64> {
    (0..g.dim()).map(|k| 0.5 * (g.lo()[k] + g.hi()[k])).collect()
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RhoArgs {
    /// Potential spec: `const:N`, `harmonic`, `poly:c@e1,..|..`, `sine:a,b`, `ramp`, `pow:a`, `tab:path`.
    #[arg(long, default_value = "harmonic")]
    pub potential: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Relative tolerance of the root finder.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Pairs sampled to fit the comparability constants; 0 skips the fit.
    #[arg(long, default_value_t = 2000)]
    pub pairs: usize,
}

pub fn rho(a: &RhoArgs, seed: u64) -> Result<Outcome> {
    let g = a.grid.resolve(3, -2.0, 2.0, 0.25)?;
    let v = potential(&a.potential, g.dim())?;
    let f = critical_radius::rho_field(&v, &g, a.tol, None, &v.default_rule())?;
    let shen = if a.pairs > 0 { Some(critical_radius::fit_shen_parameters(&f, a.pairs, seed)?) } else { None };
    let c = mid(&g);
    let mut t = table("field", coord_header(g.dim(), &["rho"]));
    for (i, r) in f.rho.values.iter().enumerate() {
        t.push(with_coords(&g, i, [*r]));
    }
    let result = json!({
        "grid": g.to_string(),
        "nodes": g.len(),
        "rho_min": f.rho.min(),
        "rho_max": f.rho.max(),
        "rho_at_center": f.at(&c),
        "center": c,
        "bracket": f.bracket,
        "shen": shen,
    });
    Ok(Outcome { result, tables: vec![t], failed: false })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AgmonArgs {
    #[arg(long, default_value = "harmonic")]
    pub potential: String,
    /// Critical radius: `potential`, `proxy`, `const:r`, `inv-linear[:a]`, `tab:path`.
    #[arg(long, default_value = "potential")]
    pub rho: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// `auto`, `fmm`, `dijkstra`, `dijkstra-axis`, `dijkstra-arith`, `constant`, `exact1d`.
    #[arg(long, default_value = "auto")]
    pub method: String,
    /// Source point, `origin` or `x1,..,xd`.
    #[arg(long, default_value = "origin")]
    pub source: String,
    /// Exact initialisation radius around the source.
    #[arg(long)]
    pub init_radius: Option<f64>,
    /// Stop the front at this distance.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Metric ball radii to report, `lo,hi,count`.
    #[arg(long, default_value = "0.25,4,5")]
    pub radii: String,
}

pub fn agmon(a: &AgmonArgs) -> Result<Outcome> {
    let g = a.grid.resolve(3, -2.0, 2.0, 0.125)?;
    let mut prov = provider(&a.rho, Some(&a.potential), &g, &a.method)?;
    prov.options.init_radius = a.init_radius;
    prov.options.cutoff = a.cutoff;
    let g = prov.grid().clone();
    let src = specs::point("source", &a.source, g.dim())?;
    let u = prov.solve(&src)?;
    let radii = specs::search_grid("radii", &a.radii)?;
    let balls = radii.iter().map(|&r| u.metric_ball(r)).collect::<Result<Vec<_>>>()?;
    let mut t = table("distance", coord_header(g.dim(), &["rho", "u"]));
    for i in 0..g.len() {
        t.push(with_coords(&g, i, [prov.rho.rho.values[i], u.distances.values[i]]));
    }
    let finite = u.distances.values.iter().cloned().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let result = json!({
        "grid": g.to_string(),
        "method": u.method,
        "source": u.source,
        "source_node": u.source_node,
        "unreached": u.unreached,
        "max_distance": finite,
        "lipschitz_violations": agmon::lipschitz_violations(&u, &prov.rho, 1e-9),
        "unclipped_radius": u.sorted().unclipped_radius(),
        "metric_balls": balls,
    });
    Ok(Outcome { result, tables: vec![t], failed: false })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AgmonSuiteArgs {
    /// Potential specs separated by `;`.
    #[arg(long, default_value = "const:1;harmonic")]
    pub potential: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

pub fn agmon_suite(a: &AgmonSuiteArgs, seed: u64) -> Result<Outcome> {
    let g = a.grid.resolve(3, -2.0, 2.0, 0.125)?;
    let cases = a
        .potential
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Ok((s.to_string(), potential(s, g.dim())?)))
        .collect::<Result<Vec<_>>>()?;
    if cases.is_empty() {
        return Err(LabError::Parse { field: "potential".into(), message: "no potential given".into() });
    }
    let rep = suites::geometry_report("agmon-suite", &cases, &g, Profile::Full, seed)?;
    let failed = !rep.passed;
    let tables = vec![check_table(std::slice::from_ref(&rep))];
    Ok(Outcome { result: json!(rep), tables, failed })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FamilyArgs {
    /// Balls per level of the nested family.
    #[arg(long, default_value_t = 64)]
    pub balls: usize,
    /// Number of levels; level `k` spans `[-b 2^k, b 2^k]^d`.
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    /// Half-width `b` of the first level.
    #[arg(long, default_value_t = 2.5)]
    pub level_base: f64,
    #[arg(long, default_value_t = 0.05)]
    pub min_radius: f64,
}

impl FamilyArgs {
    fn build(&self, seed: u64, dim: usize) -> Result<EuclideanBallFamily> {
        suites::nested_levels(self.balls, self.levels, self.level_base, seed, dim, self.min_radius)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ClassArgs {
    /// Weight: `one`, `pow:a`, `explin:b[,axis]`, `gauss:a`, `exprad:b`, `agmon:eps`, `tab:path`.
    #[arg(long)]
    pub weight: String,
    /// `s`, `h`, `a-theta`, `a-loc` or `all`.
    #[arg(long, default_value = "all")]
    pub class: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Damping constants for the S and H classes, comma separated.
    #[arg(long, default_value = "0.25,0.5,1,2")]
    pub c: String,
    /// Exponent of the H class damping.
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    /// Exponents of the A^{ρ,θ} class, comma separated.
    #[arg(long, default_value = "0,2,5,10")]
    pub theta: String,
    #[arg(long, default_value = "inv-linear")]
    pub rho: String,
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long, default_value = "auto")]
    pub method: String,
    #[arg(long, default_value = "origin")]
    pub agmon_source: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilyArgs,
}

fn estimates_table(rows: &[(String, &ClassConstantEstimate)]) -> Table {
    let mut t = Table::new("trace", &["label", "class", "count", "log_value", "verdict"]);
    for (label, e) in rows {
        let class = serde_json::to_string(&e.class).unwrap_or_default();
        for p in &e.trace {
            t.push([label.clone(), class.clone(), p.count.to_string(), p.log_value.to_string(), format!("{:?}", e.verdict).to_lowercase()]);
        }
    }
    t
}

pub fn weight_class(a: &ClassArgs, seed: u64) -> Result<Outcome> {
    let g = a.grid.resolve(1, -170.0, 170.0, 0.17)?;
    let prov = provider(&a.rho, a.potential.as_deref(), &g, &a.method)?;
    let g = prov.grid().clone();
    let w = weight(&a.weight, &prov, &a.agmon_source)?;
    let cs = specs::numbers("c", &a.c)?;
    let thetas = specs::numbers("theta", &a.theta)?;
    let mf = a.family.build(seed.wrapping_add(11), g.dim())?;
    let ef = a.family.build(seed.wrapping_add(23), g.dim())?;
    let want = |k: &str| a.class == "all" || a.class == k;
    if !["all", "s", "h", "a-theta", "a-loc"].contains(&a.class.as_str()) {
        return Err(LabError::Parse { field: "class".into(), message: format!("unknown class `{}`", a.class) });
    }
    let mut est: Vec<(String, ClassConstantEstimate)> = Vec::new();
    if want("s") {
        for e in weights::s_class_panel(&w, a.p, &cs, &prov, &mf)? {
            est.push(("s".into(), e));
        }
    }
    if want("h") || want("a-theta") || want("a-loc") {
        let panel = EuclideanPanel::new(&w, a.p, &prov.rho, &g, &ef)?;
        if want("h") {
            est.extend(cs.iter().map(|&c| ("h".to_string(), panel.h(c, a.m))));
        }
        if want("a-theta") {
            est.extend(thetas.iter().map(|&t| ("a-theta".to_string(), panel.a_theta(t))));
        }
        if want("a-loc") {
            est.push(("a-loc".into(), panel.a_loc()));
        }
    }
    let refs: Vec<(String, &ClassConstantEstimate)> = est.iter().map(|(l, e)| (l.clone(), e)).collect();
    let t = estimates_table(&refs);
    let result = json!({
        "grid": g.to_string(),
        "weight": a.weight,
        "metric_family": mf.len(),
        "euclidean_family": ef.len(),
        "estimates": est.iter().map(|(l, e)| json!({"label": l, "estimate": e})).collect::<Vec<_>>(),
    });
    Ok(Outcome { result, tables: vec![t], failed: false })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExperimentArgs {
    /// Weight specs separated by `;`.
    #[arg(long, default_value = "one;pow:0.5;agmon:0.5")]
    pub weights: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value = "0.25,0.5,1,2")]
    pub c: String,
    #[arg(long, default_value = "0,2,5,10")]
    pub theta: String,
    /// Comparability exponent; fitted from the field when absent.
    #[arg(long)]
    pub k0: Option<f64>,
    #[arg(long, default_value = "inv-linear")]
    pub rho: String,
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long, default_value = "auto")]
    pub method: String,
    #[arg(long, default_value = "origin")]
    pub agmon_source: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilyArgs,
}

pub fn experiment(a: &ExperimentArgs, seed: u64) -> Result<Outcome> {
    let g = a.grid.resolve(1, -170.0, 170.0, 0.17)?;
    let prov = provider(&a.rho, a.potential.as_deref(), &g, &a.method)?;
    let g = prov.grid().clone();
    let k0 = match a.k0 {
        Some(k) => k,
        None => critical_radius::fit_shen_parameters(&prov.rho, 2000, seed)?.k0,
    };
    let params = InclusionParams::from_k0(a.p, k0, specs::numbers("theta", &a.theta)?, specs::numbers("c", &a.c)?);
    let mf = a.family.build(seed.wrapping_add(11), g.dim())?;
    let ef = a.family.build(seed.wrapping_add(23), g.dim())?;
    let mut rows = Vec::new();
    let mut t = Table::new("classes", &["weight", "class", "verdict", "consistent"]);
    for spec in a.weights.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let w = weight(spec, &prov, &a.agmon_source)?;
        let row = weights::inclusion_experiment(spec, &w, &params, &prov, &mf, &ef)?;
        for r in [&row.a_theta, &row.h_m1, &row.s, &row.h_m2, &row.a_loc] {
            t.push([spec.to_string(), r.label.clone(), format!("{:?}", r.verdict).to_lowercase(), row.consistent.to_string()]);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LabError::Parse { field: "weights".into(), message: "no weight given".into() });
    }
    let failed = rows.iter().any(|r| !r.consistent);
    let result = json!({ "grid": g.to_string(), "params": params, "rows": rows, "consistent": !failed });
    Ok(Outcome { result, tables: vec![t], failed })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct KernelArgs {
    /// `riesz:N,j`, `mehler:t`, `heat:N,t`, `fundamental:N` or `fractional:N,alpha`.
    #[arg(long)]
    pub kernel: String,
    /// First point, `x1,..,xd`.
    #[arg(long)]
    pub x: String,
    /// Second point; with `--sweep` the direction from `x`.
    #[arg(long)]
    pub y: String,
    /// Evaluate along `x + r (y - x)/|y - x|` for `r` in `lo,hi,count`.
    #[arg(long)]
    pub sweep: Option<String>,
}

pub fn kernel(a: &KernelArgs) -> Result<Outcome> {
    let k: KernelSpec = a.kernel.parse()?;
    let x = specs::numbers("x", &a.x)?;
    let y = specs::point("y", &a.y, x.len())?;
    k.validate(x.len())?;
    let value = k.eval(&x, &y)?;
    let mut tables = Vec::new();
    let mut sweep = Vec::new();
    if let Some(s) = &a.sweep {
        let dir: Vec<f64> = y.iter().zip(&x).map(|(b, a)| b - a).collect();
        let len = grid::norm(&dir);
        if len == 0.0 {
            return Err(LabError::Singularity);
        }
        let mut t = Table::new("sweep", &["r", "value"]);
        for r in specs::search_grid("sweep", s)? {
            let z: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + r * d / len).collect();
            let v = k.eval(&x, &z)?;
            t.push([r, v]);
            sweep.push(json!({"r": r, "value": v}));
        }
        tables.push(t);
    }
    Ok(Outcome::ok(json!({ "kernel": k.to_string(), "x": x, "y": y, "value": value, "sweep": sweep }), tables))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Heat1dArgs {
    #[arg(long, default_value = "harmonic")]
    pub potential: String,
    /// One-dimensional grid; defaults to 400 nodes on `[-8, 8]`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Heat time.
    #[arg(long, default_value_t = 0.3)]
    pub t: f64,
}

pub fn heat1d(a: &Heat1dArgs) -> Result<Outcome> {
    let g = match &a.grid {
        Some(s) => s.parse::<Grid>()?,
        None => Grid::cube_points(1, -8.0, 8.0, 400)?,
    };
    if g.dim() != 1 {
        return Err(LabError::Dimension { dim: g.dim(), reason: "heat1d needs a one-dimensional grid".into() });
    }
    let v = potential(&a.potential, 1)?;
    let sg = DiscreteSemigroup::new(&v, &g)?;
    let k = sg.kernel(a.t)?;
    let half = sg.kernel(0.5 * a.t)?;
    let comp = half.compose(&half)?;
    let semigroup_defect = k.interior().iter().flat_map(|&i| k.interior().into_iter().map(move |j| (i, j))).map(|(i, j)| (comp.at(i, j) - k.at(i, j)).abs()).fold(0.0, f64::max);
    let harmonic = matches!(a.potential.trim(), "harmonic");
    let mt = kernels::mehler_parameter(a.t);
    let mehler_error = if harmonic {
        Some(kernels::interior_sup_relative_error(&k, |x, y| kernels::mehler_kernel(mt, &[x], &[y]).unwrap_or(f64::NAN)))
    } else {
        None
    };
    let mut lowest = sg.eigenvalues().to_vec();
    lowest.sort_by(f64::total_cmp);
    lowest.truncate(5);
    let c = g.nearest(&[0.0]);
    let mut t = Table::new("row", &["y", "kernel", "mehler"]);
    for j in 0..g.len() {
        let y = g.coord(0, j);
        let m = if harmonic { kernels::mehler_kernel(mt, &[g.coord(0, c)], &[y])? } else { f64::NAN };
        t.push([y, k.at(c, j), m]);
    }
    let result = json!({
        "grid": g.to_string(),
        "t": a.t,
        "lowest_eigenvalues": lowest,
        "diagonal_at_center": k.at(c, c),
        "semigroup_defect": semigroup_defect,
        "mehler_sup_relative_error": mehler_error,
    });
    Ok(Outcome::ok(result, vec![t]))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ProbeArgs {
    /// Test function: `one`, `indicator:c..,r`, `gaussian:c..,σ`, `bump:σ`, `sine:k`, `random`, `tab:path`.
    #[arg(long, default_value = "bump:0.5")]
    pub field: String,
    /// Evaluate at nodes within this half-width of the center.
    #[arg(long, default_value_t = 0.5)]
    pub probe_half: f64,
    /// Keep every `k`-th probe node.
    #[arg(long, default_value_t = 1)]
    pub probe_step: usize,
}

impl ProbeArgs {
    fn points(&self, g: &Grid) -> Vec<usize> {
        operators::central_nodes(g, self.probe_half).into_iter().step_by(self.probe_step.max(1)).collect()
    }
}

fn maximal_outcome(g: &Grid, r: &MaximalResult, extra: Value) -> Outcome {
    let mut t = table("values", coord_header(g.dim(), &["value", "argmax"]));
    for ((&p, &v), &s) in r.points.iter().zip(&r.values).zip(&r.argmax) {
        t.push(with_coords(g, p, [v, s]));
    }
    let result = json!({
        "grid": g.to_string(),
        "points": r.points.len(),
        "max": r.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "min": r.values.iter().cloned().fold(f64::INFINITY, f64::min),
        "skipped": r.skipped,
        "endpoint_hits": r.endpoint_hits,
        "warnings": r.warnings,
        "params": extra,
    });
    Outcome::ok(result, vec![t])
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MaximalArgs {
    /// `adapted` (metric balls, damping e^{-cr}) or `phi` (Euclidean balls, damping (1 + r/ρ)^{-cm}).
    #[arg(long, default_value = "adapted")]
    pub op: String,
    #[arg(long, default_value = "inv-linear")]
    pub rho: String,
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long, default_value = "auto")]
    pub method: String,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    /// Radius search grid `lo,hi,count`; defaults to `h,2,40`.
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub uncentered: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub probe: ProbeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

pub fn maximal(a: &MaximalArgs, seed: u64) -> Result<Outcome> {
    let g = a.grid.resolve(2, -3.0, 3.0, 0.125)?;
    let prov = provider(&a.rho, a.potential.as_deref(), &g, &a.method)?;
    let g = prov.grid().clone();
    let f = FieldSpec::parse(&a.probe.field)?.build(&g, seed)?;
    let radii = match &a.radii {
        Some(s) => specs::search_grid("radii", s)?,
        None => operators::log_grid(g.min_spacing(), 2.0, 40)?,
    };
    let points = a.probe.points(&g);
    if points.is_empty() {
        return Err(LabError::Config("no probe nodes; increase --probe-half".into()));
    }
    let search = BallSearch {
        mode: if a.uncentered { Centering::Uncentered } else { Centering::Centered },
        radii,
        points,
        centers: None,
    };
    let r = match a.op.as_str() {
        "adapted" => operators::maximal_adapted(&f, &prov, a.c, &search)?,
        "phi" => operators::maximal_phi(&f, &prov.rho, a.c, a.m, &search)?,
        other => return Err(LabError::Parse { field: "op".into(), message: format!("expected `adapted` or `phi`, got `{other}`") }),
    };
    Ok(maximal_outcome(&g, &r, json!({"op": a.op, "c": a.c, "m": a.m})))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HeatArgs {
    /// `mehler` (V = |x|², times in the Mehler parameter) or `const` (V ≡ N).
    #[arg(long, default_value = "mehler")]
    pub family: String,
    #[arg(long = "N", default_value_t = 1.0)]
    pub n: f64,
    /// Time grid `lo,hi,count`.
    #[arg(long, default_value = "1e-4,20,60")]
    pub times: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub probe: ProbeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

pub fn heat(a: &HeatArgs, seed: u64) -> Result<Outcome> {
    let g = a.grid.resolve(1, -6.0, 6.0, 0.0625)?;
    let family = match a.family.as_str() {
        "mehler" => HeatFamily::Mehler,
        "const" => HeatFamily::Constant { n: a.n },
        other => return Err(LabError::Parse { field: "family".into(), message: format!("expected `mehler` or `const`, got `{other}`") }),
    };
    let f = FieldSpec::parse(&a.probe.field)?.build(&g, seed)?;
    let times = specs::search_grid("times", &a.times)?;
    let points = a.probe.points(&g);
    if points.is_empty() {
        return Err(LabError::Config("no probe nodes; increase --probe-half".into()));
    }
    let r = operators::heat_maximal(&f, &family, &times, &points)?;
    Ok(maximal_outcome(&g, &r, json!({"family": a.family, "N": a.n})))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NormArgs {
    #[arg(long, default_value = "one")]
    pub weight: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Random balls added to the candidate family.
    #[arg(long, default_value_t = 8)]
    pub balls: usize,
    /// `fixed:r`, `uniform:a,b` or `loguniform:a,b`.
    #[arg(long, default_value = "loguniform:0.25,1")]
    pub radius_law: String,
    /// Seeded uniform candidate fields.
    #[arg(long, default_value_t = 2)]
    pub random_fields: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub eps: f64,
    /// Critical radius used by Agmon weights.
    #[arg(long, default_value = "const:1")]
    pub rho: String,
    #[arg(long, default_value = "origin")]
    pub agmon_source: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

impl NormArgs {
    fn run(&self, op: &OpSpec, fixed: Vec<Ball>, seed: u64) -> Result<Outcome> {
        let g = self.grid.resolve(3, -3.0, 3.0, 0.25)?;
        let prov = provider(&self.rho, None, &g, "auto")?;
        let w = weight(&self.weight, &prov, &self.agmon_source)?;
        let law: RadiusLaw = self.radius_law.parse()?;
        let mut balls = fixed;
        if self.balls > 0 {
            balls.extend(grid::sample_ball_family(&g, self.balls, &law, seed, 0.0)?.balls);
        }
        if balls.is_empty() && self.random_fields == 0 {
            return Err(LabError::Config("no candidate functions: set --balls or --random-fields".into()));
        }
        let cfg = CandidateConfig { balls: EuclideanBallFamily::from_balls(balls)?, random_fields: self.random_fields, seed, eps: self.eps };
        let operator = op.build(&g)?;
        let nb = operators::weighted_norm_lower_bound(operator.as_ref(), self.p, &w, &cfg)?;
        let mut t = Table::new("candidates", &["label", "ratio"]);
        for c in &nb.candidates {
            t.push([c.label.clone(), c.ratio.to_string()]);
        }
        let result = json!({ "grid": g.to_string(), "weight": self.weight, "best": nb.best_label(), "norm": nb });
        Ok(Outcome::ok(result, vec![t]))
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RieszArgs {
    #[arg(long = "N", default_value_t = 1.0)]
    pub n: f64,
    /// Direction index, 1-based.
    #[arg(long, default_value_t = 1)]
    pub j: usize,
    /// Truncate the kernel to `|x - y| ≤ R`.
    #[arg(long)]
    pub local: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub norm: NormArgs,
}

pub fn riesz(a: &RieszArgs, seed: u64) -> Result<Outcome> {
    if a.j == 0 {
        return Err(LabError::Parse { field: "j".into(), message: "direction index is 1-based".into() });
    }
    let g = a.norm.grid.resolve(3, -3.0, 3.0, 0.25)?;
    let l = (0..g.dim()).map(|k| 0.5 * (g.hi()[k] - g.lo()[k])).fold(f64::INFINITY, f64::min);
    let c = mid(&g);
    let shifted = |s: f64| {
        let mut p = c.clone();
        p[a.j - 1] += s;
        p
    };
    // Opposite balls along the direction and two concentric ones.
    let fixed = vec![
        Ball { center: shifted(-l / 2.0), radius: l / 4.0 },
        Ball { center: shifted(l / 2.0), radius: l / 4.0 },
        Ball { center: c.clone(), radius: 0.5 },
        Ball { center: c.clone(), radius: 1.0 },
    ];
    a.norm.run(&OpSpec::Riesz { n: a.n, j: a.j - 1, local: a.local }, fixed, seed)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NormBoundArgs {
    /// `identity`, `riesz:N,j`, `riesz-local:N,j,R`, `maximal-const:N,c,rmax` or `heat-const:N[,R]`.
    #[arg(long)]
    pub op: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub norm: NormArgs,
}

pub fn norm_bound(a: &NormBoundArgs, seed: u64) -> Result<Outcome> {
    a.norm.run(&OpSpec::parse(&a.op)?, Vec::new(), seed)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// `all` or a comma list of suite names.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Capped grids: 48³ in three dimensions, 2000 nodes in one.
    #[arg(long)]
    pub quick: bool,
}

fn check_table(reports: &[suites::SuiteReport]) -> Table {
    let mut t = Table::new("checks", &["suite", "check", "passed", "value", "threshold", "informational", "detail"]);
    for r in reports {
        for c in &r.checks {
            t.push([r.name.clone(), c.name.clone(), c.passed.to_string(), c.value.to_string(), c.threshold.to_string(), c.informational.to_string(), c.detail.clone()]);
        }
    }
    t
}

pub fn verify(a: &VerifyArgs, seed: u64) -> Result<Outcome> {
    let profile = if a.quick { Profile::Quick } else { Profile::Full };
    let names = suites::resolve_suites(&a.suite)?;
    let mut reports = Vec::new();
    let start = Instant::now();
    for n in &names {
        let r = suites::run_suite(n, profile, seed)?;
        eprintln!("{:<18} {}  {:>9.1} ms", r.name, if r.passed { "PASS" } else { "FAIL" }, r.elapsed_ms);
        for c in r.failed_checks() {
            eprintln!("    failed: {} ({}; value {:.4e}, threshold {:.4e})", c.name, c.detail, c.value, c.threshold);
        }
        reports.push(r);
    }
    eprintln!("total {:.1} s", start.elapsed().as_secs_f64());
    let passed = reports.iter().all(|r| r.passed);
    let t = check_table(&reports);
    let result = json!({ "profile": profile, "passed": passed, "suites": reports });
    Ok(Outcome { result, tables: vec![t], failed: !passed })
}
