//! Potential catalogue, exact ball integrals for polynomials, and the
//! reverse Hölder estimator.
//!
//! Spec grammar (one term per potential):
//!
//! | spec             | V(x)                                   |
//! |------------------|----------------------------------------|
//! | `const:N`        | `N`                                    |
//! | `harmonic`       | `|x|²`                                 |
//! | `poly:c@e1,..,ed|..` | `Σ c · x₁^e1 ⋯ x_d^ed`             |
//! | `sine:a,b`       | `a + b sin x₁`                         |
//! | `ramp`           | `max(0, x₁)`                           |
//! | `pow:a`          | `|x|^a`                                |
//! | `tab:<path>`     | CSV field, multilinear interpolation   |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimate::{BallWitness, ClassConstantEstimate, ClassTag};
use crate::grid::{self, BallRule, EuclideanBallFamily, Grid, ScalarField};
use crate::par;

/// Polynomial with real coefficients indexed by exponent vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<(f64, Vec<u32>)>) -> Result<Self> {
        if let Some((_, e)) = terms.iter().find(|(_, e)| e.len() != dim) {
            return Err(LabError::Config(format!("exponent {e:?} does not match dimension {dim}")));
        }
        let mut p = Self { dim, terms };
        p.normalize();
        Ok(p)
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.1.cmp(&b.1));
        let mut merged: Vec<(f64, Vec<u32>)> = Vec::with_capacity(self.terms.len());
        for (c, e) in self.terms.drain(..) {
            match merged.last_mut() {
                Some((c0, e0)) if *e0 == e => *c0 += c,
                _ => merged.push((c, e)),
            }
        }
        merged.retain(|(c, _)| *c != 0.0);
        self.terms = merged;
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(_, e)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// `∂^α P`.
    pub fn derivative(&self, alpha: &[u32]) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e.iter().zip(alpha).all(|(&k, &a)| k >= a))
            .map(|(c, e)| {
                let mut coef = *c;
                let mut ne = e.clone();
                for (k, &a) in alpha.iter().enumerate() {
                    for j in 0..a {
                        coef *= (e[k] - j) as f64;
                    }
                    ne[k] -= a;
                }
                (coef, ne)
            })
            .collect();
        let mut p = Polynomial { dim: self.dim, terms };
        p.normalize();
        p
    }

    /// All multi-indices with `|α| ≤ k` in graded order.
    pub fn multi_indices(dim: usize, k: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        for total in 0..=k {
            let mut cur = vec![0u32; dim];
            compositions(total, 0, &mut cur, &mut out);
        }
        out
    }

    /// `∫_{B(c,r)} P`, exact up to rounding.
    pub fn ball_integral(&self, center: &[f64], r: f64) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for (coef, beta) in &self.terms {
            // Expand Π (c_i + r y_i)^{β_i} and integrate monomials over the unit ball.
            let mut acc = 0.0;
            let mut gamma = vec![0u32; d];
            loop {
                if gamma.iter().all(|g| g % 2 == 0) {
                    let mut term = 1.0;
                    for i in 0..d {
                        term *= binomial(beta[i], gamma[i]) * center[i].powi((beta[i] - gamma[i]) as i32);
                    }
                    let g: u32 = gamma.iter().sum();
                    acc += term * r.powi((g as usize + d) as i32) * unit_ball_moment(&gamma);
                }
                let mut k = 0;
                loop {
                    if k == d {
                        break;
                    }
                    if gamma[k] < beta[k] {
                        gamma[k] += 1;
                        break;
                    }
                    gamma[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
            total += coef * acc;
        }
        total
    }
}

fn compositions(remaining: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for a in (0..=remaining).rev() {
        cur[pos] = a;
        compositions(remaining - a, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `∫_{B(0,1)} y^γ dy`.
pub fn unit_ball_moment(gamma: &[u32]) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if gamma.iter().any(|g| g % 2 == 1) {
        return 0.0;
    }
    let d = gamma.len() as f64;
    let g: f64 = gamma.iter().map(|&x| x as f64).sum();
    let ln_num: f64 = gamma.iter().map(|&x| ln_gamma((x as f64 + 1.0) / 2.0)).sum();
    2.0 * (ln_num - ln_gamma((g + d) / 2.0)).exp() / (g + d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    Constant { n: f64 },
    Harmonic,
    Polynomial { poly: Polynomial },
    /// `offset + amp · sin x₁`.
    Sine { offset: f64, amp: f64 },
    /// `max(0, x₁)`.
    Ramp,
    /// `|x|^a`.
    PowerAbs { a: f64 },
    Tabulated { field: ScalarField },
}

/// A nonnegative potential on `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub dim: usize,
}

/// How ball integrals of a potential are computed.
#[derive(Debug, Clone, PartialEq)]
pub enum IntegrationRule {
    /// Closed form; constants, harmonic and polynomial kinds only.
    Exact,
    /// Rule applied to the whole ball in `ℝ^d`.
    Free(BallRule),
    /// Rule restricted to the grid's box.
    OnGrid(Grid, BallRule),
}

impl Potential {
    pub fn constant(n: f64, dim: usize) -> Self {
        Self { kind: PotentialKind::Constant { n }, dim }
    }

    pub fn harmonic(dim: usize) -> Self {
        Self { kind: PotentialKind::Harmonic, dim }
    }

    pub fn polynomial(poly: Polynomial) -> Self {
        let dim = poly.dim;
        Self { kind: PotentialKind::Polynomial { poly }, dim }
    }

    pub fn tabulated(field: ScalarField) -> Self {
        let dim = field.grid.dim();
        Self { kind: PotentialKind::Tabulated { field }, dim }
    }

    /// Parses the spec grammar documented at module level.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let bad = |m: String| LabError::Parse { field: "potential".into(), message: m };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a)),
            None => (spec.trim(), None),
        };
        let kind = match (head, arg) {
            ("const", Some(a)) => PotentialKind::Constant { n: num(a)? },
            ("harmonic", None) => PotentialKind::Harmonic,
            ("ramp", None) => PotentialKind::Ramp,
            ("pow", Some(a)) => PotentialKind::PowerAbs { a: num(a)? },
            ("sine", Some(a)) => {
                let v: Vec<&str> = a.split(',').collect();
                if v.len() != 2 {
                    return Err(bad("sine takes offset,amplitude".into()));
                }
                PotentialKind::Sine { offset: num(v[0])?, amp: num(v[1])? }
            }
            ("poly", Some(a)) => {
                let mut terms = Vec::new();
                for t in a.split('|') {
                    let (c, e) = t.split_once('@').ok_or_else(|| bad(format!("term `{t}` needs coef@exponents")))?;
                    let exps = e
                        .split(',')
                        .map(|x| x.trim().parse::<u32>().map_err(|err| bad(format!("exponent `{x}`: {err}"))))
                        .collect::<Result<Vec<_>>>()?;
                    if exps.len() != dim {
                        return Err(bad(format!("term `{t}` has {} exponents, expected {dim}", exps.len())));
                    }
                    terms.push((num(c)?, exps));
                }
                PotentialKind::Polynomial { poly: Polynomial::new(dim, terms)? }
            }
            ("tab", Some(path)) => {
                let field = ScalarField::read_csv(Path::new(path.trim()))?;
                if field.grid.dim() != dim {
                    return Err(bad(format!("table has dimension {}, expected {dim}", field.grid.dim())));
                }
                PotentialKind::Tabulated { field }
            }
            _ => return Err(bad(format!("unrecognised spec `{spec}`"))),
        };
        let v = Self { kind, dim };
        if let PotentialKind::Constant { n } = v.kind {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(bad(format!("constant must be finite and nonnegative, got {n}")));
            }
        }
        Ok(v)
    }

    /// Value without validity checks.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Constant { n } => *n,
            PotentialKind::Harmonic => x.iter().map(|v| v * v).sum(),
            PotentialKind::Polynomial { poly } => poly.eval(x),
            PotentialKind::Sine { offset, amp } => offset + amp * x[0].sin(),
            PotentialKind::Ramp => x[0].max(0.0),
            PotentialKind::PowerAbs { a } => grid::norm(x).powf(*a),
            PotentialKind::Tabulated { field } => field.interpolate(x),
        }
    }

    /// Checked evaluation.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(LabError::Dimension { dim: x.len(), reason: format!("potential is {}-dimensional", self.dim) });
        }
        let v = self.value(x);
        if !v.is_finite() {
            return Err(LabError::Evaluation { point: x.to_vec() });
        }
        if v < 0.0 {
            return Err(LabError::PotentialValidity { point: x.to_vec(), value: v });
        }
        Ok(v)
    }

    /// Scans every node of `grid`; the first failing node is reported.
    pub fn validate_on(&self, grid: &Grid) -> Result<()> {
        par::try_map_range(grid.len(), |i| self.evaluate(&grid.point(i)).map(|_| ())).map(|_| ())
    }

    /// Whether a closed-form ball integral exists.
    pub fn has_exact_integral(&self) -> bool {
        matches!(self.kind, PotentialKind::Constant { .. } | PotentialKind::Harmonic | PotentialKind::Polynomial { .. })
    }

    /// A sensible default rule: exact when available, else a dense product
    /// Gauss rule.
    pub fn default_rule(&self) -> IntegrationRule {
        if self.has_exact_integral() {
            IntegrationRule::Exact
        } else if self.dim <= 3 {
            IntegrationRule::Free(BallRule::Spherical { order: 24 })
        } else {
            IntegrationRule::Free(BallRule::MonteCarlo { samples: 20_000, seed: 0 })
        }
    }

    /// `∫_{B(center, r)} V`.
    pub fn ball_integral(&self, center: &[f64], r: f64, rule: &IntegrationRule) -> Result<f64> {
        match rule {
            IntegrationRule::Exact => {
                let d = self.dim;
                let vol = grid::unit_ball_volume(d) * r.powi(d as i32);
                match &self.kind {
                    PotentialKind::Constant { n } => Ok(n * vol),
                    PotentialKind::Harmonic => {
                        let c2: f64 = center.iter().map(|x| x * x).sum();
                        Ok(vol * (c2 + d as f64 * r * r / (d as f64 + 2.0)))
                    }
                    PotentialKind::Polynomial { poly } => Ok(poly.ball_integral(center, r)),
                    _ => Err(LabError::Config("no closed-form ball integral for this potential".into())),
                }
            }
            IntegrationRule::Free(rule) => Ok(grid::integrate_ball_free(&|x: &[f64]| self.value(x), center, r, *rule, 0)?.value),
            IntegrationRule::OnGrid(g, rule) => Ok(grid::integrate_ball(&|x: &[f64]| self.value(x), g, center, r, *rule, 0)?.value),
        }
    }

    /// Returns `λ²V(λx)` for the kinds with a polynomial form.
    pub fn rescaled(&self, lambda: f64) -> Option<Potential> {
        let poly = self.as_polynomial()?;
        let l2 = lambda * lambda;
        let terms = poly
            .terms
            .iter()
            .map(|(c, e)| (c * l2 * lambda.powi(e.iter().sum::<u32>() as i32), e.clone()))
            .collect();
        Some(Potential::polynomial(Polynomial { dim: self.dim, terms }))
    }

    /// The polynomial behind constant/harmonic/polynomial kinds.
    pub fn as_polynomial(&self) -> Option<Polynomial> {
        match &self.kind {
            PotentialKind::Constant { n } => Some(Polynomial { dim: self.dim, terms: vec![(*n, vec![0; self.dim])] }),
            PotentialKind::Harmonic => Some(harmonic_poly(self.dim)),
            PotentialKind::Polynomial { poly } => Some(poly.clone()),
            _ => None,
        }
    }
}

fn harmonic_poly(dim: usize) -> Polynomial {
    let terms = (0..dim)
        .map(|k| {
            let mut e = vec![0; dim];
            e[k] = 2;
            (1.0, e)
        })
        .collect();
    Polynomial { dim, terms }
}

/// Empirical reverse Hölder constant
/// `sup_B (avg_B V^q)^{1/q} / avg_B V` over a ball family.
///
/// Balls on which `V` averages to zero are skipped with a warning; if every
/// ball is skipped the potential is reported as degenerate.
pub fn rh_constant(v: &Potential, q: f64, family: &EuclideanBallFamily, rule: &IntegrationRule) -> Result<ClassConstantEstimate> {
    if !(q > 1.0) {
        return Err(LabError::Config(format!("reverse Hölder exponent must exceed 1, got {q}")));
    }
    if family.is_empty() {
        return Err(LabError::Config("ball family is empty".into()));
    }
    let per_ball = par::try_map_range(family.len(), |i| -> Result<Option<f64>> {
        let b = &family.balls[i];
        let (s1, sq) = match rule {
            IntegrationRule::Exact => {
                return Err(LabError::Config("reverse Hölder averages need a quadrature rule".into()));
            }
            IntegrationRule::Free(r) => {
                let a = grid::integrate_ball_free(&|x: &[f64]| v.value(x), &b.center, b.radius, *r, i as u64)?.value;
                let c = grid::integrate_ball_free(&|x: &[f64]| v.value(x).powf(q), &b.center, b.radius, *r, i as u64)?.value;
                (a, c)
            }
            IntegrationRule::OnGrid(g, r) => {
                let a = grid::integrate_ball(&|x: &[f64]| v.value(x), g, &b.center, b.radius, *r, i as u64)?.value;
                let c = grid::integrate_ball(&|x: &[f64]| v.value(x).powf(q), g, &b.center, b.radius, *r, i as u64)?.value;
                (a, c)
            }
        };
        if s1 <= 0.0 {
            return Ok(None);
        }
        // The volume cancels: (Σ V^q / |B|)^{1/q} / (Σ V / |B|) = Σ V^q^{1/q} |B|^{1-1/q} / Σ V.
        let vol = match rule {
            IntegrationRule::OnGrid(g, r) => grid::integrate_ball(&|_: &[f64]| 1.0, g, &b.center, b.radius, *r, i as u64)?.value,
            IntegrationRule::Free(r) => grid::integrate_ball_free(&|_: &[f64]| 1.0, &b.center, b.radius, *r, i as u64)?.value,
            IntegrationRule::Exact => unreachable!(),
        };
        Ok(Some(sq.ln() / q + (1.0 - 1.0 / q) * vol.ln() - s1.ln()))
    })?;
    let mut warnings = Vec::new();
    for (i, r) in per_ball.iter().enumerate() {
        if r.is_none() {
            let b = &family.balls[i];
            let msg = format!("ball {i} (centre {:?}, radius {}) skipped: potential averages to zero", b.center, b.radius);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    if per_ball.iter().all(|r| r.is_none()) {
        return Err(LabError::Degenerate("potential vanishes on every ball of the family".into()));
    }
    Ok(ClassConstantEstimate::from_log_values(
        ClassTag::ReverseHolder { q },
        &per_ball,
        |i| BallWitness { index: i, center: family.balls[i].center.clone(), radius: family.balls[i].radius },
        &[],
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Ball;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn catalogue_values() {
        assert_eq!(Potential::parse("const:4", 3).unwrap().evaluate(&[1.0, -2.0, 7.0]).unwrap(), 4.0);
        assert_eq!(Potential::parse("harmonic", 3).unwrap().evaluate(&[1.0, 2.0, 2.0]).unwrap(), 9.0);
        let p = Potential::parse("poly:1@2,2,0", 3).unwrap();
        assert_eq!(p.evaluate(&[2.0, 3.0, 0.0]).unwrap(), 36.0);
        let neg = Potential::parse("poly:-1@0,0,0", 3).unwrap();
        assert!(matches!(neg.evaluate(&[0.0; 3]), Err(LabError::PotentialValidity { .. })));
        assert!(matches!(Potential::parse("poly:1@2,2", 3), Err(LabError::Parse { .. })));
        assert!(matches!(Potential::parse("bogus", 3), Err(LabError::Parse { .. })));
    }

    #[test]
    fn derivative_of_monomial() {
        let p = Polynomial::new(2, vec![(3.0, vec![2, 3])]).unwrap();
        let d = p.derivative(&[1, 2]);
        assert_eq!(d.terms, vec![(36.0, vec![1, 1])]);
        assert!(p.derivative(&[3, 0]).is_zero());
        assert_eq!(Polynomial::multi_indices(3, 2).len(), 10);
    }

    #[test]
    fn exact_polynomial_ball_integral_matches_quadrature() {
        let p = Polynomial::new(3, vec![(1.0, vec![2, 2, 0]), (0.5, vec![1, 0, 3]), (2.0, vec![0, 0, 0])]).unwrap();
        let c = [0.3, -0.7, 1.1];
        let exact = p.ball_integral(&c, 0.8);
        let quad = grid::integrate_ball_free(&|x: &[f64]| p.eval(x), &c, 0.8, BallRule::Spherical { order: 12 }, 0).unwrap().value;
        assert_relative_eq!(exact, quad, max_relative = 1e-12);
        let h = Potential::harmonic(3);
        assert_relative_eq!(h.ball_integral(&[0.0; 3], 1.0, &IntegrationRule::Exact).unwrap(), 4.0 * PI / 5.0, max_relative = 1e-14);
    }

    #[test]
    fn ramp_skips_zero_balls() {
        let v = Potential::parse("ramp", 2).unwrap();
        let fam = EuclideanBallFamily::from_balls(vec![
            Ball { center: vec![-3.0, 0.0], radius: 1.0 },
            Ball { center: vec![1.0, 0.0], radius: 0.5 },
        ])
        .unwrap();
        let e = rh_constant(&v, 2.0, &fam, &IntegrationRule::Free(BallRule::Spherical { order: 16 })).unwrap();
        assert_eq!(e.skipped, 1);
        assert_eq!(e.warnings.len(), 1);
        let all_zero = EuclideanBallFamily::from_balls(vec![Ball { center: vec![-3.0, 0.0], radius: 1.0 }]).unwrap();
        assert!(matches!(
            rh_constant(&v, 2.0, &all_zero, &IntegrationRule::Free(BallRule::Spherical { order: 16 })),
            Err(LabError::Degenerate(_))
        ));
    }
}
