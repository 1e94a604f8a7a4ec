//! Closed-form kernels for constant and harmonic potentials, plus the
//! finite-difference semigroup on a 1-D grid.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{LabError, Result};
use crate::grid::{dist, Grid};
use crate::linalg::{tridiagonal_eigen, TridiagEigen};
use crate::potentials::Potential;
use crate::quad::{adaptive_simpson, gauss_kronrod, gauss_kronrod_semi_infinite};

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(LabError::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Quadrature rule used for [`s_function_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SRule {
    /// Adaptive Simpson on the defining integrals after `t = (v/(1-v))^2 / a`.
    MappedSimpson,
    /// Bessel representation `√2 Γ(d/2)/√π · a^{-(d-1)/2} e^a K_{(d+1)/2}(a)`,
    /// with `e^a K_n(a)` from the trapezoid rule on the `cosh` integral.
    Bessel,
}

/// `e^a K_nu(a) = ∫_0^∞ exp(-a(cosh u - 1)) cosh(nu u) du`.
pub fn scaled_bessel_k(nu: f64, a: f64) -> Result<f64> {
    check_positive("a", a)?;
    let h = (0.3 / a.sqrt()).min(0.1);
    let term = |u: f64| (-a * (u.cosh() - 1.0)).exp() * (nu * u).cosh();
    let mut sum = 0.5 * term(0.0);
    let mut k = 1usize;
    loop {
        let u = k as f64 * h;
        let v = term(u);
        sum += v;
        // Past the peak and negligible.
        if a * u.sinh() > nu && v <= 1e-18 * sum {
            break;
        }
        k += 1;
        if k > 200_000 {
            return Err(LabError::Numerical("scaled Bessel K: truncation not reached".into()));
        }
    }
    Ok(sum * h)
}

/// `s(a) = ∫_0^∞ (1 + t) e^{-at} (t + t²/2)^{(d-2)/2} dt`.
pub fn s_function(a: f64, d: usize) -> Result<f64> {
    s_function_with(a, d, SRule::Bessel)
}

pub fn s_function_with(a: f64, d: usize, rule: SRule) -> Result<f64> {
    check_positive("a", a)?;
    if d == 0 {
        return Err(LabError::Dimension { dim: d, reason: "s(a) needs d >= 1".into() });
    }
    let df = d as f64;
    match rule {
        SRule::Bessel => {
            let nu = 0.5 * (df - 1.0);
            let ek = scaled_bessel_k(nu + 1.0, a)?;
            Ok(2f64.sqrt() * gamma(0.5 * df) / PI.sqrt() * a.powf(-nu) * ek)
        }
        SRule::MappedSimpson => {
            let mu = 0.5 * (df - 2.0);
            // T = a t, T = (v/(1-v))^2.
            // Limit at v = 0: 2/√a for d = 1, zero otherwise.
            let g0 = if d == 1 { 2.0 / a.sqrt() } else { 0.0 };
            let g = |v: f64| {
                if v <= 0.0 {
                    return g0;
                }
                if v >= 1.0 {
                    return 0.0;
                }
                let q = v / (1.0 - v);
                let big_t = q * q;
                let dt = 2.0 * v / (1.0 - v).powi(3);
                let t = big_t / a;
                let val = (-big_t).exp() * (t * (1.0 + 0.5 * t)).powf(mu) * (1.0 + t) * dt / a;
                if val.is_finite() {
                    val
                } else {
                    0.0
                }
            };
            let n = 256;
            let coarse: f64 = (0..n).map(|i| g((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
            let tol = 1e-12 * coarse.abs().max(f64::MIN_POSITIVE);
            let mut total = 0.0;
            // Split so that each piece starts with a sensible Simpson panel.
            for i in 0..16 {
                let lo = i as f64 / 16.0;
                let hi = (i + 1) as f64 / 16.0;
                total += adaptive_simpson(&g, lo, hi, tol / 16.0, 48)?;
            }
            Ok(total)
        }
    }
}

/// `K_N^{(j)}(x, y) = -(x_j - y_j)/|x-y| · e^{-√N|x-y|} s(√N|x-y|)` with unit normalization.
pub fn riesz_kernel_constant(n: f64, axis: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    check_positive("N", n)?;
    let d = x.len();
    if d < 3 || y.len() != d || axis >= d {
        return Err(LabError::Dimension { dim: d, reason: "Riesz kernel needs d >= 3 and a valid axis".into() });
    }
    let r = dist(x, y);
    if r == 0.0 {
        return Err(LabError::Singularity);
    }
    Ok(riesz_kernel_radial(n, d, r)? * -(x[axis] - y[axis]) / r)
}

/// Radial factor `e^{-√N r} s(√N r)` of the constant-potential Riesz kernel.
pub fn riesz_kernel_radial(n: f64, d: usize, r: f64) -> Result<f64> {
    let a = n.sqrt() * r;
    Ok((-a).exp() * s_function(a, d)?)
}

/// `α(t) = (√(1+t²) - 1)/(2t)`.
pub fn alpha(t: f64) -> f64 {
    // Cancellation-free form.
    t / (2.0 * ((1.0 + t * t).sqrt() + 1.0))
}

/// Kernel of `e^{-s(-Δ+|x|²)}` written in the parameter `t = sinh 2s`.
pub fn mehler_kernel(t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_positive("t", t)?;
    let d = x.len() as f64;
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let n2: f64 = x.iter().chain(y).map(|a| a * a).sum();
    Ok((2.0 * PI * t).powf(-0.5 * d) * (-r2 / (2.0 * t) - alpha(t) * n2).exp())
}

/// Parameter `t3` with `k̃_{t1} ∘ k̃_{t2} = k̃_{t3}`.
pub fn mehler_compose(t1: f64, t2: f64) -> f64 {
    t1 * (1.0 + t2 * t2).sqrt() + t2 * (1.0 + t1 * t1).sqrt()
}

/// Mehler parameter for physical semigroup time `s`.
pub fn mehler_parameter(s: f64) -> f64 {
    (2.0 * s).sinh()
}

/// Physical semigroup time for Mehler parameter `t`.
pub fn mehler_time(t: f64) -> f64 {
    0.5 * t.asinh()
}

/// `e^{-Nt} (4πt)^{-d/2} e^{-|x-y|²/4t}`; `N = 0` is the free kernel.
pub fn heat_kernel_constant(n: f64, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_positive("t", t)?;
    if !(n >= 0.0) {
        return Err(LabError::Domain(format!("N must be nonnegative, got {n}")));
    }
    let d = x.len() as f64;
    let r = dist(x, y);
    Ok((-n * t).exp() * (4.0 * PI * t).powf(-0.5 * d) * (-r * r / (4.0 * t)).exp())
}

fn gamma3(m: f64, r: f64) -> f64 {
    (-m.sqrt() * r).exp() / (4.0 * PI * r)
}

/// `Γ_N(x, y) = e^{-√N|x-y|}/(4π|x-y|)` in three dimensions.
pub fn fundamental_solution_constant_3d(n: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(LabError::Domain(format!("N must be nonnegative, got {n}")));
    }
    if x.len() != 3 || y.len() != 3 {
        return Err(LabError::Dimension { dim: x.len(), reason: "closed form is three-dimensional".into() });
    }
    let r = dist(x, y);
    if r == 0.0 {
        return Err(LabError::Singularity);
    }
    Ok(gamma3(n, r))
}

/// Kernel of `(-Δ+N)^{-α/2}` in three dimensions:
/// `(1/π) sin(πα/2) ∫_0^∞ λ^{-α/2} Γ_{N+λ}(x, y) dλ`.
pub fn fractional_kernel_constant(n: f64, alpha_order: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(alpha_order > 0.0 && alpha_order <= 2.0) {
        return Err(LabError::Domain(format!("alpha must lie in (0, 2], got {alpha_order}")));
    }
    let g0 = fundamental_solution_constant_3d(n, x, y)?;
    if alpha_order == 2.0 {
        return Ok(g0);
    }
    let r = dist(x, y);
    fractional_radial(n, alpha_order, r)
}

fn fractional_radial(n: f64, a: f64, r: f64) -> Result<f64> {
    // λ = u / r²; the integrand depends on u through √(N r² + u).
    let half = 0.5 * a;
    let nr2 = n * r * r;
    let g = |u: f64| (-(nr2 + u).sqrt()).exp();
    let g0 = g(0.0);
    // [0, 1] with u = v²: removes the endpoint singularity.
    let head = |v: f64| {
        if v == 0.0 {
            return 0.0;
        }
        let u = v * v;
        2.0 * v.powf(1.0 - a) * (g(u) - g0)
    };
    let (h, _) = gauss_kronrod(&head, 0.0, 1.0, 1e-15, 1e-12, 2000)?;
    let (tail, _) = gauss_kronrod_semi_infinite(&|u: f64| u.powf(-half) * g(u), 1.0, 1e-16, 1e-12, 2000)?;
    let integral = h + g0 / (1.0 - half) + tail;
    // dλ = du / r², Γ carries 1/(4π r).
    let scale = r.powf(a - 2.0) / (4.0 * PI * r);
    Ok((PI * half).sin() / PI * integral * scale)
}

/// Envelope `C e^{-ε s} / r^p` fitted to kernel samples, `s` a distance-like variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub power: f64,
    /// Least-squares decay rate over the far half of the samples.
    pub rate: f64,
    /// Smallest upper constant for the fitted rate.
    pub upper: f64,
    /// Largest lower constant at the fitted rate, when the lower envelope uses rate `lower_rate`.
    pub lower: f64,
    pub lower_rate: f64,
}

/// Fits `lower e^{-lower_rate·s}/r^p ≤ K ≤ upper e^{-rate·s}/r^p` over samples `(r, s, K)`.
/// `rate` is a least-squares slope shrunk by `slack`; `lower_rate` is the slope grown by `slack`.
pub fn fit_envelope(samples: &[(f64, f64, f64)], power: f64, slack: f64) -> Result<EnvelopeFit> {
    if samples.len() < 4 {
        return Err(LabError::Degenerate("envelope fit needs at least four samples".into()));
    }
    let mut pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(r, s, k)| (s, (k * r.powf(power)).ln()))
        .collect();
    if pts.iter().any(|p| !p.1.is_finite()) {
        return Err(LabError::Numerical("nonpositive kernel sample in envelope fit".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let far = &pts[pts.len() / 2..];
    let m = far.len() as f64;
    let sx: f64 = far.iter().map(|p| p.0).sum::<f64>() / m;
    let sy: f64 = far.iter().map(|p| p.1).sum::<f64>() / m;
    let cov: f64 = far.iter().map(|p| (p.0 - sx) * (p.1 - sy)).sum();
    let var: f64 = far.iter().map(|p| (p.0 - sx).powi(2)).sum();
    if var == 0.0 {
        return Err(LabError::Degenerate("envelope fit needs distinct distances".into()));
    }
    let slope = -cov / var;
    let rate = slope * (1.0 - slack);
    let lower_rate = slope * (1.0 + slack);
    let upper = pts.iter().map(|&(s, l)| l + rate * s).fold(f64::NEG_INFINITY, f64::max).exp();
    let lower = pts.iter().map(|&(s, l)| l + lower_rate * s).fold(f64::INFINITY, f64::min).exp();
    Ok(EnvelopeFit { power, rate, upper, lower, lower_rate })
}

/// Ratio of the constant-potential heat kernel to the envelope
/// `e^{-D1 (1 + √t/ρ)^{1/(k0+1)}} t^{-d/2} e^{-D2 r²/t}`; its sup over a sweep is `D0`.
pub fn kurata_ratio(n: f64, d: usize, k0: f64, d1: f64, d2: f64, t: f64, r: f64) -> Result<f64> {
    let rho = (n * crate::grid::unit_ball_volume(d)).powf(-0.5);
    let mut y = vec![0.0; d];
    y[0] = r;
    let k = heat_kernel_constant(n, t, &vec![0.0; d], &y)?;
    let env = (-d1 * (1.0 + t.sqrt() / rho).powf(1.0 / (k0 + 1.0))).exp() * t.powf(-0.5 * d as f64) * (-d2 * r * r / t).exp();
    Ok(k / env)
}

/// Closed-form kernel family with parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    RieszConstant { n: f64, axis: usize },
    Mehler { t: f64 },
    HeatConstant { n: f64, t: f64 },
    FundamentalConstant3d { n: f64 },
    FractionalConstant { n: f64, alpha: f64 },
}

impl KernelSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let need3 = |what: &str| -> Result<()> {
            if dim == 3 {
                Ok(())
            } else {
                Err(LabError::Dimension { dim, reason: format!("{what} is three-dimensional") })
            }
        };
        match *self {
            KernelSpec::RieszConstant { n, axis } => {
                check_positive("N", n)?;
                if dim < 3 || axis >= dim {
                    return Err(LabError::Dimension { dim, reason: "riesz kernel needs d >= 3 and axis < d".into() });
                }
                Ok(())
            }
            KernelSpec::Mehler { t } => check_positive("t", t),
            KernelSpec::HeatConstant { n, t } => {
                check_positive("N", n)?;
                check_positive("t", t)
            }
            KernelSpec::FundamentalConstant3d { n } => {
                check_positive("N", n)?;
                need3("fundamental solution")
            }
            KernelSpec::FractionalConstant { n, alpha } => {
                check_positive("N", n)?;
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(LabError::Domain(format!("alpha must lie in (0, 2], got {alpha}")));
                }
                need3("fractional kernel")
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(LabError::Dimension { dim: y.len(), reason: "point dimensions differ".into() });
        }
        self.validate(x.len())?;
        match *self {
            KernelSpec::RieszConstant { n, axis } => riesz_kernel_constant(n, axis, x, y),
            KernelSpec::Mehler { t } => mehler_kernel(t, x, y),
            KernelSpec::HeatConstant { n, t } => heat_kernel_constant(n, t, x, y),
            KernelSpec::FundamentalConstant3d { n } => fundamental_solution_constant_3d(n, x, y),
            KernelSpec::FractionalConstant { n, alpha } => fractional_kernel_constant(n, alpha, x, y),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::RieszConstant { n, axis } => write!(f, "riesz:{n},{}", axis + 1),
            KernelSpec::Mehler { t } => write!(f, "mehler:{t}"),
            KernelSpec::HeatConstant { n, t } => write!(f, "heat:{n},{t}"),
            KernelSpec::FundamentalConstant3d { n } => write!(f, "fundamental:{n}"),
            KernelSpec::FractionalConstant { n, alpha } => write!(f, "fractional:{n},{alpha}"),
        }
    }
}

/// Grammar: `riesz:N,j` (1-based axis) | `mehler:t` | `heat:N,t` | `fundamental:N` | `fractional:N,alpha`.
impl FromStr for KernelSpec {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| LabError::Parse { field: "kernel".into(), message: format!("{m} in `{s}`") };
        let (head, args) = s.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<_>>()?;
        let want = |k: usize| if nums.len() == k { Ok(()) } else { Err(bad(&format!("expected {k} parameter(s)"))) };
        match head.trim() {
            "riesz" => {
                want(2)?;
                if nums[1] < 1.0 || nums[1].fract() != 0.0 {
                    return Err(bad("axis must be a positive integer"));
                }
                Ok(KernelSpec::RieszConstant { n: nums[0], axis: nums[1] as usize - 1 })
            }
            "mehler" => {
                want(1)?;
                Ok(KernelSpec::Mehler { t: nums[0] })
            }
            "heat" => {
                want(2)?;
                Ok(KernelSpec::HeatConstant { n: nums[0], t: nums[1] })
            }
            "fundamental" => {
                want(1)?;
                Ok(KernelSpec::FundamentalConstant3d { n: nums[0] })
            }
            "fractional" => {
                want(2)?;
                Ok(KernelSpec::FractionalConstant { n: nums[0], alpha: nums[1] })
            }
            _ => Err(bad("unknown family")),
        }
    }
}

/// Eigendecomposition of `-Δ_h + V` on a 1-D grid with zero values outside it.
#[derive(Debug, Clone)]
pub struct DiscreteSemigroup {
    grid: Grid,
    eigen: TridiagEigen,
}

impl DiscreteSemigroup {
    pub fn new(v: &Potential, grid: &Grid) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(LabError::Dimension { dim: grid.dim(), reason: "discrete semigroup is one-dimensional".into() });
        }
        let n = grid.len();
        let h = grid.spacing()[0];
        let inv = 1.0 / (h * h);
        let diag: Vec<f64> = (0..n)
            .map(|i| v.evaluate(&[grid.coord(0, i)]).map(|vi| 2.0 * inv + vi))
            .collect::<Result<_>>()?;
        let off = vec![-inv; n.saturating_sub(1)];
        let eigen = tridiagonal_eigen(&diag, &off)?;
        Ok(DiscreteSemigroup { grid: grid.clone(), eigen })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    /// Dense kernel `[e^{-tL_h}]_{ij} / h`, row `i` = evaluation node.
    pub fn kernel(&self, t: f64) -> Result<KernelTable> {
        check_positive("t", t)?;
        let h = self.grid.spacing()[0];
        let values = self.eigen.apply_fn(|l| (-t * l).exp() / h);
        Ok(KernelTable { grid: self.grid.clone(), t, values })
    }
}

impl DiscreteSemigroup {
    /// `e^{-tL_h} f` at every node.
    pub fn apply(&self, t: f64, f: &[f64]) -> Result<Vec<f64>> {
        let eig = &self.eigen;
        let n = eig.n;
        if f.len() != n {
            return Err(LabError::Precondition("field length does not match the semigroup grid".into()));
        }
        let mut out = vec![0.0; n];
        for k in 0..n {
            let v = eig.vector(k);
            let c: f64 = v.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * (-t * eig.values[k]).exp();
            if c != 0.0 {
                for (o, a) in out.iter_mut().zip(v) {
                    *o += c * a;
                }
            }
        }
        Ok(out)
    }
}

/// Dense kernel table on a 1-D grid.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: Grid,
    pub t: f64,
    /// Row-major `n × n`.
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    /// Kernel of the composition, `Σ_k K1(i,k) K2(k,j) h`.
    pub fn compose(&self, other: &KernelTable) -> Result<KernelTable> {
        let n = self.n();
        if other.n() != n {
            return Err(LabError::Precondition("kernel tables live on different grids".into()));
        }
        let h = self.grid.spacing()[0];
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.values[i * n + k] * h;
                if a == 0.0 {
                    continue;
                }
                for (o, b) in row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(KernelTable { grid: self.grid.clone(), t: self.t + other.t, values: out })
    }

    /// Indices whose coordinate lies in the middle half of the domain.
    pub fn interior(&self) -> Vec<usize> {
        let lo = self.grid.lo()[0];
        let hi = self.grid.hi()[0];
        let q = 0.25 * (hi - lo);
        (0..self.n())
            .filter(|&i| {
                let x = self.grid.coord(0, i);
                x >= lo + q && x <= hi - q
            })
            .collect()
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
        for i in 0..self.n() {
            w.write_record(self.row(i).iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(std::io::Error::other(e.to_string()))
}

/// Dense `e^{-tL_h}` kernel for a 1-D potential.
pub fn discrete_semigroup(v: &Potential, grid: &Grid, t: f64) -> Result<KernelTable> {
    DiscreteSemigroup::new(v, grid)?.kernel(t)
}

/// Max-norm error of `table` against `reference` over interior rows and columns,
/// divided by the max of the reference there.
pub fn interior_sup_relative_error<F: Fn(f64, f64) -> f64>(table: &KernelTable, reference: F) -> f64 {
    let idx = table.interior();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &i in &idx {
        let x = table.grid.coord(0, i);
        for &j in &idx {
            let y = table.grid.coord(0, j);
            let r = reference(x, y);
            err = err.max((table.at(i, j) - r).abs());
            scale = scale.max(r.abs());
        }
    }
    err / scale
}

/// Sandwich check `lo_factor·free ≤ k ≤ hi_factor·free` over interior entries,
/// with an absolute floor `floor_rel · max(free)`. Returns the violation count.
pub fn sandwich_violations(k: &KernelTable, free: &KernelTable, lo_factor: f64, hi_factor: f64, floor_rel: f64) -> usize {
    let idx = k.interior();
    let fmax = free.values.iter().cloned().fold(0.0, f64::max);
    let floor = floor_rel * fmax;
    let mut bad = 0;
    for &i in &idx {
        for &j in &idx {
            let f = free.at(i, j);
            let v = k.at(i, j);
            if v < lo_factor * f - floor || v > hi_factor * f + floor {
                bad += 1;
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn s_rules_agree() {
        for d in [3usize, 4] {
            let mut a = 1e-2;
            while a <= 1e3 {
                let b = s_function_with(a, d, SRule::Bessel).unwrap();
                let s = s_function_with(a, d, SRule::MappedSimpson).unwrap();
                assert_relative_eq!(b, s, max_relative = 1e-8);
                a *= 3.7;
            }
        }
    }

    #[test]
    fn s_regression_and_monotone() {
        assert_relative_eq!(s_function(1.0, 3).unwrap(), 3.12312805494662, max_relative = 1e-10);
        assert_relative_eq!(s_function(1.0, 4).unwrap(), 7.0, max_relative = 1e-10);
        let v: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|&a| s_function(a, 3).unwrap()).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
        assert!(s_function(0.0, 3).is_err());
    }

    #[test]
    fn riesz_kernel_basic() {
        let x = [0.3, -0.2, 0.5];
        let y = [0.3, 0.7, -0.1];
        assert_eq!(riesz_kernel_constant(1.0, 0, &x, &y).unwrap(), 0.0);
        let a = riesz_kernel_constant(2.0, 1, &x, &y).unwrap();
        let b = riesz_kernel_constant(2.0, 1, &y, &x).unwrap();
        assert_eq!(a, -b);
        assert!(matches!(riesz_kernel_constant(1.0, 0, &x, &x), Err(LabError::Singularity)));
    }

    #[test]
    fn alpha_values() {
        assert_relative_eq!(alpha(1.0), (2f64.sqrt() - 1.0) / 2.0, epsilon = 1e-15);
        for t in [1e-2, 1e-3] {
            assert!((alpha(t) / t - 0.25).abs() < 1e-3);
        }
        assert_relative_eq!(alpha(mehler_parameter(0.7)), 0.7f64.tanh() / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn mehler_compose_identity() {
        assert_relative_eq!(mehler_compose(0.8, 1e-12), 0.8, max_relative = 1e-10);
        assert_eq!(mehler_compose(0.3, 1.7), mehler_compose(1.7, 0.3));
        let s = mehler_time(mehler_compose(mehler_parameter(0.2), mehler_parameter(0.5)));
        assert_relative_eq!(s, 0.7, max_relative = 1e-13);
    }

    #[test]
    fn heat_mass() {
        let n = 0.7;
        let t = 0.4;
        let (v, _) = gauss_kronrod(&|y: f64| heat_kernel_constant(n, t, &[0.3], &[y]).unwrap(), -20.0, 20.0, 1e-14, 1e-12, 200).unwrap();
        assert_relative_eq!(v, (-n * t).exp(), max_relative = 1e-8);
    }

    #[test]
    fn fundamental_log_identity() {
        let x = [0.0, 0.0, 0.0];
        let y = [1.0, 2.0, -0.5];
        let r = dist(&x, &y);
        let g = fundamental_solution_constant_3d(2.0, &x, &y).unwrap();
        assert_relative_eq!((4.0 * PI * r * g).ln(), -(2f64).sqrt() * r, epsilon = 1e-13);
    }

    #[test]
    fn fundamental_solves_equation_off_pole() {
        let n = 1.5;
        let p = [0.8, -0.4, 0.6];
        let mut prev = f64::INFINITY;
        for h in [0.02, 0.01] {
            let g = |q: [f64; 3]| fundamental_solution_constant_3d(n, &[0.0; 3], &q).unwrap();
            let mut lap = -6.0 * g(p);
            for ax in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut q = p;
                    q[ax] += s * h;
                    lap += g(q);
                }
            }
            let res = (-lap / (h * h) + n * g(p)).abs() / g(p);
            assert!(res < prev / 3.0);
            prev = res;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn fractional_limits() {
        let x = [0.0; 3];
        let y = [0.7, 0.2, -0.4];
        let g = fundamental_solution_constant_3d(1.3, &x, &y).unwrap();
        let k = fractional_kernel_constant(1.3, 1.999, &x, &y).unwrap();
        // Absolute gap; the relative gap at this α is about 4e-4.
        assert!((k - g).abs() < 1e-4, "{k} vs {g}");
        let r = dist(&x, &y);
        let k1 = fractional_kernel_constant(1e-8, 1.0, &x, &y).unwrap();
        let classical = 1.0 / (2.0 * PI * PI * r * r);
        assert!((k1 - classical).abs() / classical < 1e-4);
    }

    #[test]
    fn fractional_matches_bessel_potential() {
        // (2/((4π)^{3/2}Γ(s))) (r/(2√N))^{s-3/2} K_{3/2-s}(√N r), s = α/2.
        let n: f64 = 0.8;
        for (alpha, r) in [(0.5f64, 0.3f64), (1.0, 1.7), (1.5, 4.0), (1.999, 0.83)] {
            let s = 0.5 * alpha;
            let a = n.sqrt() * r;
            let bk = scaled_bessel_k(1.5 - s, a).unwrap() * (-a).exp();
            let exact = 2.0 / ((4.0 * PI).powf(1.5) * gamma(s)) * (r / (2.0 * n.sqrt())).powf(s - 1.5) * bk;
            let k = fractional_kernel_constant(n, alpha, &[0.0; 3], &[r, 0.0, 0.0]).unwrap();
            assert_relative_eq!(k, exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn kernel_spec_parse() {
        let k: KernelSpec = "riesz:1,2".parse().unwrap();
        assert_eq!(k, KernelSpec::RieszConstant { n: 1.0, axis: 1 });
        assert_eq!(k.to_string().parse::<KernelSpec>().unwrap(), k);
        assert!("mehler:1,2".parse::<KernelSpec>().is_err());
        assert!("riesz:1,0".parse::<KernelSpec>().is_err());
        assert!(KernelSpec::Mehler { t: -1.0 }.eval(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn discrete_free_and_semigroup() {
        let grid = Grid::cube_points(1, -20.0, 20.0, 1001).unwrap();
        let sg = DiscreteSemigroup::new(&Potential::constant(0.0, 1), &grid).unwrap();
        let k = sg.kernel(0.5).unwrap();
        let c = grid.len() / 2;
        for j in 0..grid.len() {
            let y = grid.coord(0, j);
            if y.abs() > 10.0 {
                continue;
            }
            let e = heat_kernel_constant(0.0, 0.5, &[grid.coord(0, c)], &[y]).unwrap();
            assert!((k.at(c, j) - e).abs() < 1e-4, "{} {}", k.at(c, j), e);
        }
        let small = Grid::cube_points(1, -5.0, 5.0, 81).unwrap();
        let sg = DiscreteSemigroup::new(&Potential::harmonic(1), &small).unwrap();
        let a = sg.kernel(0.2).unwrap().compose(&sg.kernel(0.3).unwrap()).unwrap();
        let b = sg.kernel(0.5).unwrap();
        let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
        for i in 0..small.len() {
            let mass: f64 = b.row(i).iter().sum::<f64>() * small.spacing()[0];
            assert!(mass <= 1.0 + 1e-12);
        }
    }
}
