//! The critical radius `ρ_V(x) = sup{r > 0 : r^{2-d} ∫_{B(x,r)} V ≤ 1}`,
//! fitted Shen parameters, and the polynomial proxy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{self, Grid, ScalarField};
use crate::par;
use crate::potentials::{IntegrationRule, Potential, Polynomial};

/// Downward scan factor used to locate the last up-crossing of `F`.
pub const SCAN_FACTOR: f64 = 1.3;

/// `F(r) = r^{2-d} ∫_{B(x,r)} V`.
pub fn scale_functional(v: &Potential, x: &[f64], r: f64, rule: &IntegrationRule) -> Result<f64> {
    Ok(r.powi(2 - v.dim as i32) * v.ball_integral(x, r, rule)?)
}

/// Critical radius at one point.
///
/// A geometric scan from `bracket.1` downward by [`SCAN_FACTOR`] finds the
/// largest sampled radius with `F ≤ 1`; bisection then shrinks the
/// crossing interval to relative width `tol` and returns its lower end, so
/// `F(ρ) ≤ 1 < F(ρ (1 + tol))`.
pub fn rho_at(v: &Potential, x: &[f64], tol: f64, bracket: (f64, f64), rule: &IntegrationRule) -> Result<f64> {
    let d = v.dim;
    if d < 3 {
        return Err(LabError::Dimension { dim: d, reason: "the critical radius needs d ≥ 3".into() });
    }
    if !(tol > 0.0) {
        return Err(LabError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let (r_min, r_max) = bracket;
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(LabError::Config(format!("invalid bracket [{r_min}, {r_max}]")));
    }
    let f = |r: f64| scale_functional(v, x, r, rule);
    if f(r_max)? <= 1.0 {
        return Err(LabError::BracketTooSmall { r_max, points: 1, first: x.to_vec() });
    }
    let mut hi = r_max;
    let mut lo = r_max / SCAN_FACTOR;
    loop {
        if f(lo)? <= 1.0 {
            break;
        }
        if lo <= r_min {
            return Err(LabError::BracketTooLarge { r_min, point: x.to_vec() });
        }
        hi = lo;
        lo = (lo / SCAN_FACTOR).max(r_min);
    }
    while (hi - lo) > tol * lo {
        let mid = 0.5 * (lo + hi);
        if f(mid)? <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// A positive critical radius sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRadiusField {
    pub rho: ScalarField,
    /// Potential the field was computed from, if any.
    pub potential: Option<Potential>,
    pub tol: f64,
    pub bracket: (f64, f64),
}

impl CriticalRadiusField {
    /// Wraps a user-supplied positive field.
    pub fn from_field(rho: ScalarField) -> Result<Self> {
        if let Some((i, &v)) = rho.values.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
            return Err(LabError::Metric { node: i, value: v });
        }
        let bracket = (rho.min(), rho.max());
        Ok(Self { rho, potential: None, tol: 0.0, bracket })
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        Self::from_field(ScalarField::from_fn(grid, f))
    }

    pub fn grid(&self) -> &Grid {
        &self.rho.grid
    }

    /// Value at the nearest node.
    pub fn at(&self, x: &[f64]) -> f64 {
        self.rho.at(x)
    }
}

/// Default bracket `[10⁻³ h, diameter]`.
pub fn default_bracket(grid: &Grid) -> (f64, f64) {
    (1e-3 * grid.min_spacing(), grid.diameter())
}

/// `ρ_V` at every node of `grid`.
pub fn rho_field(v: &Potential, grid: &Grid, tol: f64, bracket: Option<(f64, f64)>, rule: &IntegrationRule) -> Result<CriticalRadiusField> {
    if grid.dim() != v.dim {
        return Err(LabError::Dimension { dim: grid.dim(), reason: format!("potential is {}-dimensional", v.dim) });
    }
    let bracket = bracket.unwrap_or_else(|| default_bracket(grid));
    let results = par::map_range(grid.len(), |i| rho_at(v, &grid.point(i), tol, bracket, rule));
    let mut values = Vec::with_capacity(results.len());
    let mut too_small: Vec<Vec<f64>> = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(x) => values.push(x),
            Err(LabError::BracketTooSmall { .. }) => {
                too_small.push(grid.point(i));
                values.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(first) = too_small.first() {
        return Err(LabError::BracketTooSmall { r_max: bracket.1, points: too_small.len(), first: first.clone() });
    }
    Ok(CriticalRadiusField { rho: ScalarField::new(grid.clone(), values)?, potential: Some(v.clone()), tol, bracket })
}

/// `1 / Σ_{|α| ≤ deg P} |∂^α P(x)|^{1/(|α|+2)}`.
pub fn polynomial_rho_proxy(p: &Polynomial, x: &[f64]) -> Result<f64> {
    let k = p.degree();
    let mut sum = 0.0;
    for alpha in Polynomial::multi_indices(p.dim, k) {
        let order: u32 = alpha.iter().sum();
        let val = p.derivative(&alpha).eval(x).abs();
        if val > 0.0 {
            sum += val.powf(1.0 / (order as f64 + 2.0));
        }
    }
    if sum == 0.0 {
        return Err(LabError::Degenerate("polynomial vanishes identically".into()));
    }
    Ok(1.0 / sum)
}

/// Polynomial proxy for a potential of constant, harmonic or polynomial kind.
pub fn potential_rho_proxy(v: &Potential, x: &[f64]) -> Result<f64> {
    let p = v.as_polynomial().ok_or_else(|| LabError::Config("potential has no polynomial form".into()))?;
    polynomial_rho_proxy(&p, x)
}

/// Search grid for `k₀`.
pub const K0_GRID: [f64; 13] = [1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0];
/// Ratio of consecutive `B₀` candidates.
pub const B0_STEP_LOG2: f64 = 1.0 / 8.0;
/// Largest admissible `B₀`.
pub const B0_CAP: f64 = 8.0;

/// Constants of the two-sided comparability of `ρ` and the geometry
/// constants derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShenParameters {
    pub b0: f64,
    pub k0: f64,
    /// `max(B₀, D₀, D₁, 2)`.
    pub beta: f64,
    pub a0: f64,
    pub d0: Option<f64>,
    pub d1: Option<f64>,
    pub sample_size: usize,
    pub violations: usize,
    /// `B₀` needed at this `k₀` before rounding up to the search grid.
    pub required_b0: f64,
}

impl ShenParameters {
    /// Parameters with the given `(B₀, k₀)` and no geometry constants yet.
    pub fn new(b0: f64, k0: f64) -> Self {
        let beta = b0.max(2.0);
        Self { b0, k0, beta, a0: a0_for(beta, k0), d0: None, d1: None, sample_size: 0, violations: 0, required_b0: b0 }
    }

    /// Folds fitted `D₀` and `D₁` into `β` and recomputes `A₀`.
    pub fn with_geometry(mut self, d0: Option<f64>, d1: Option<f64>) -> Self {
        self.d0 = d0;
        self.d1 = d1;
        self.beta = [Some(self.b0), d0, d1, Some(2.0)].into_iter().flatten().fold(0.0, f64::max);
        self.a0 = a0_for(self.beta, self.k0);
        self
    }
}

/// Smallest `A₀` with `A₀ ≥ 2β (1 + A₀β)^{k₀/(k₀+1)}`.
pub fn a0_for(beta: f64, k0: f64) -> f64 {
    let e = k0 / (k0 + 1.0);
    let g = |a: f64| 2.0 * beta * (1.0 + a * beta).powf(e);
    // g is increasing and concave with g(1) > 1, so the iteration climbs
    // monotonically to the smallest fixed point.
    let mut a = 1.0;
    for _ in 0..10_000 {
        let next = g(a);
        if (next - a).abs() <= 1e-12 * next {
            return next;
        }
        a = next;
    }
    a
}

fn required_b0(rx: f64, ry: f64, dist: f64, k0: f64) -> f64 {
    let t = 1.0 + dist / rx;
    let q = ry / rx;
    (t.powf(-k0) / q).max(q / t.powf(k0 / (k0 + 1.0)))
}

/// Fits the smallest `k₀` on [`K0_GRID`] (and for it the smallest `B₀` on a
/// `2^{1/8}` log grid, capped at [`B0_CAP`]) for which
/// `B₀⁻¹ρ(x)(1+|x−y|/ρ(x))^{−k₀} ≤ ρ(y) ≤ B₀ρ(x)(1+|x−y|/ρ(x))^{k₀/(k₀+1)}`
/// holds at every sampled pair of nodes.
pub fn fit_shen_parameters(field: &CriticalRadiusField, pair_count: usize, seed: u64) -> Result<ShenParameters> {
    if pair_count < 100 {
        return Err(LabError::Precondition(format!("need at least 100 pairs, got {pair_count}")));
    }
    let g = field.grid();
    let n = g.len();
    if n < 2 {
        return Err(LabError::Precondition("field has fewer than two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = (0..pair_count)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect();
    fit_shen_on_pairs(field, &pairs)
}

/// As [`fit_shen_parameters`] on explicit node pairs.
pub fn fit_shen_on_pairs(field: &CriticalRadiusField, pairs: &[(usize, usize)]) -> Result<ShenParameters> {
    let g = field.grid();
    let rho = &field.rho.values;
    let geo: Vec<(f64, f64, f64, usize, usize)> = pairs
        .iter()
        .map(|&(a, b)| (rho[a], rho[b], grid::dist(&g.point(a), &g.point(b)), a, b))
        .collect();
    let mut worst: Option<(f64, usize, usize)> = None;
    for &k0 in &K0_GRID {
        let mut req = 1.0f64;
        let mut arg = (0, 0);
        for &(rx, ry, dxy, a, b) in &geo {
            let r = required_b0(rx, ry, dxy, k0);
            if r > req {
                req = r;
                arg = (a, b);
            }
        }
        let steps = (req.log2() / B0_STEP_LOG2 - 1e-9).ceil().max(1.0);
        let b0 = 2f64.powf(steps * B0_STEP_LOG2);
        if b0 <= B0_CAP {
            let mut p = ShenParameters::new(b0, k0);
            p.sample_size = pairs.len();
            p.required_b0 = req;
            p.violations = geo.iter().filter(|&&(rx, ry, dxy, _, _)| required_b0(rx, ry, dxy, k0) > b0).count();
            return Ok(p);
        }
        if worst.map_or(true, |w| req < w.0) {
            worst = Some((req, arg.0, arg.1));
        }
    }
    let (req, a, b) = worst.expect("nonempty k0 grid");
    Err(LabError::FitFailure { x: g.point(a), y: g.point(b), required_b0: req })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn constant_and_harmonic_closed_forms() {
        let v = Potential::constant(1.0, 3);
        let r = rho_at(&v, &[0.3, 0.1, -2.0], 1e-6, (1e-4, 10.0), &IntegrationRule::Exact).unwrap();
        assert_relative_eq!(r, (4.0 * PI / 3.0).powf(-0.5), max_relative = 2e-6);
        let h = Potential::harmonic(3);
        let r = rho_at(&h, &[0.0; 3], 1e-6, (1e-4, 10.0), &IntegrationRule::Exact).unwrap();
        assert_relative_eq!(r, (5.0 / (4.0 * PI)).powf(0.25), max_relative = 2e-6);
    }

    #[test]
    fn bracket_errors() {
        let v = Potential::constant(1.0, 3);
        assert!(matches!(rho_at(&v, &[0.0; 3], 1e-3, (1e-3, 0.3), &IntegrationRule::Exact), Err(LabError::BracketTooSmall { .. })));
        assert!(matches!(rho_at(&v, &[0.0; 3], 1e-3, (0.6, 3.0), &IntegrationRule::Exact), Err(LabError::BracketTooLarge { .. })));
        assert!(matches!(rho_at(&Potential::constant(1.0, 2), &[0.0; 2], 1e-3, (0.1, 3.0), &IntegrationRule::Exact), Err(LabError::Dimension { .. })));
    }

    #[test]
    fn proxy_examples() {
        let p = Polynomial::new(3, vec![(1.0, vec![2, 0, 0])]).unwrap();
        let v = polynomial_rho_proxy(&p, &[1.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(v, 1.0 / (1.0 + 2f64.powf(1.0 / 3.0) + 2f64.powf(0.25)), max_relative = 1e-14);
        assert_relative_eq!(v, 0.2899, epsilon = 1e-4);
        let h = Potential::harmonic(3).as_polynomial().unwrap();
        assert_relative_eq!(polynomial_rho_proxy(&h, &[0.0; 3]).unwrap(), 1.0 / (3.0 * 2f64.powf(0.25)), max_relative = 1e-14);
        let n = Potential::constant(4.0, 3).as_polynomial().unwrap();
        assert_relative_eq!(polynomial_rho_proxy(&n, &[1.0, 2.0, 3.0]).unwrap(), 0.5, max_relative = 1e-14);
        assert!(polynomial_rho_proxy(&Polynomial::new(3, vec![]).unwrap(), &[0.0; 3]).is_err());
    }

    #[test]
    fn a0_solves_its_defining_inequality() {
        for &(beta, k0) in &[(2.0, 1.0), (3.5, 2.0), (8.0, 0.5)] {
            let a = a0_for(beta, k0);
            assert!(a > 1.0);
            assert!(a >= 2.0 * beta * (1.0 + a * beta).powf(k0 / (k0 + 1.0)) * (1.0 - 1e-10));
            let smaller = 0.99 * a;
            assert!(smaller < 2.0 * beta * (1.0 + smaller * beta).powf(k0 / (k0 + 1.0)));
        }
    }

    #[test]
    fn shen_fit_on_supplied_fields() {
        let g = Grid::cube(3, -4.0, 4.0, 0.5).unwrap();
        let c = CriticalRadiusField::from_fn(&g, |_| 0.7).unwrap();
        let p = fit_shen_parameters(&c, 500, 1).unwrap();
        assert_eq!(p.k0, 1.0);
        assert!(p.b0 < 1.1);
        let r = CriticalRadiusField::from_fn(&g, |x| 1.0 / (1.0 + grid::norm(x))).unwrap();
        let p = fit_shen_parameters(&r, 2000, 2).unwrap();
        assert_eq!(p.violations, 0);
        assert!(p.b0 <= B0_CAP);
        let jump = CriticalRadiusField::from_fn(&g, |x| if x[0] > 0.0 { 1e4 } else { 1e-4 }).unwrap();
        assert!(matches!(fit_shen_parameters(&jump, 500, 3), Err(LabError::FitFailure { .. })));
        assert!(matches!(fit_shen_parameters(&r, 10, 3), Err(LabError::Precondition(_))));
    }
}
