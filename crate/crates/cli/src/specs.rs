//! Spec grammars used only by the command line: critical radius sources,
//! test functions, operators, points and search grids.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schrolab::critical_radius::{self, CriticalRadiusField};
use schrolab::grid::{self, Grid, ScalarField};
use schrolab::operators::{self, ConvolutionMaximal, GridOperator, Identity, RieszConstant};
use schrolab::potentials::Potential;
use schrolab::{LabError, Result};

fn bad(field: &str, message: impl Into<String>) -> LabError {
    LabError::Parse { field: field.into(), message: message.into() }
}

pub fn numbers(field: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|e| bad(field, format!("`{a}`: {e}"))))
        .collect()
}

fn split(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((h, a)) => (h.trim(), Some(a)),
        None => (spec.trim(), None),
    }
}

/// `origin` or `x1,..,xd`.
pub fn point(field: &str, s: &str, dim: usize) -> Result<Vec<f64>> {
    if s.trim() == "origin" {
        return Ok(vec![0.0; dim]);
    }
    let p = numbers(field, s)?;
    if p.len() != dim {
        return Err(bad(field, format!("expected {dim} coordinate(s), got {}", p.len())));
    }
    Ok(p)
}

/// `lo,hi,count`: `count` log-spaced values.
pub fn search_grid(field: &str, s: &str) -> Result<Vec<f64>> {
    let v = numbers(field, s)?;
    if v.len() != 3 || v[2] < 1.0 || v[2].fract() != 0.0 {
        return Err(bad(field, format!("expected `lo,hi,count`, got `{s}`")));
    }
    operators::log_grid(v[0], v[1], v[2] as usize)
}

/// Source of a critical radius field.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSpec {
    /// Root-found from the potential.
    Potential,
    /// Closed-form proxy of a polynomial-type potential.
    Proxy,
    Constant(f64),
    /// `(1 + a|x|)^{-1}`.
    InvLinear(f64),
    Table(String),
}

impl RhoSpec {
    /// `potential` | `proxy` | `const:r` | `inv-linear[:a]` | `tab:path`.
    pub fn parse(s: &str) -> Result<Self> {
        let num = |a: &str| numbers("rho", a).and_then(|v| if v.len() == 1 { Ok(v[0]) } else { Err(bad("rho", "expected one number")) });
        match split(s) {
            ("potential", None) => Ok(RhoSpec::Potential),
            ("proxy", None) => Ok(RhoSpec::Proxy),
            ("const", Some(a)) => Ok(RhoSpec::Constant(num(a)?)),
            ("inv-linear", None) => Ok(RhoSpec::InvLinear(1.0)),
            ("inv-linear", Some(a)) => Ok(RhoSpec::InvLinear(num(a)?)),
            ("tab", Some(p)) => Ok(RhoSpec::Table(p.trim().to_string())),
            _ => Err(bad("rho", format!("unrecognised spec `{s}`"))),
        }
    }

    pub fn needs_potential(&self) -> bool {
        matches!(self, RhoSpec::Potential | RhoSpec::Proxy)
    }

    /// Builds the field on `grid`; tabulated fields keep their own grid.
    pub fn build(&self, v: Option<&Potential>, grid: &Grid, tol: f64) -> Result<CriticalRadiusField> {
        let need = || v.ok_or_else(|| LabError::Config("a potential is required for this rho spec".into()));
        match self {
            RhoSpec::Potential => {
                let v = need()?;
                critical_radius::rho_field(v, grid, tol, None, &v.default_rule())
            }
            RhoSpec::Proxy => {
                let v = need()?;
                let vals: Vec<f64> = (0..grid.len()).map(|i| critical_radius::potential_rho_proxy(v, &grid.point(i))).collect::<Result<_>>()?;
                CriticalRadiusField::from_field(ScalarField::new(grid.clone(), vals)?)
            }
            RhoSpec::Constant(r) => CriticalRadiusField::from_fn(grid, |_| *r),
            RhoSpec::InvLinear(a) => CriticalRadiusField::from_fn(grid, |x| 1.0 / (1.0 + a * grid::norm(x))),
            RhoSpec::Table(p) => CriticalRadiusField::from_field(ScalarField::read_csv(Path::new(p))?),
        }
    }
}

/// Test function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    One,
    Indicator { center: Vec<f64>, r: f64 },
    /// `exp(-|x-c|²/σ²)`.
    Gaussian { center: Vec<f64>, sigma: f64 },
    /// Gaussian centred in the grid box.
    Bump { sigma: f64 },
    /// `1 + sin(k x₁)/2`.
    Sine { k: f64 },
    /// Uniform on `[0, 1)` from the run seed.
    Random,
    Table(String),
}

impl FieldSpec {
    /// `one` | `indicator:c1,..,cd,r` | `gaussian:c1,..,cd,σ` | `bump:σ` | `sine:k` | `random` | `tab:path`.
    pub fn parse(s: &str) -> Result<Self> {
        let center_and = |a: &str| -> Result<(Vec<f64>, f64)> {
            let mut v = numbers("field", a)?;
            if v.len() < 2 {
                return Err(bad("field", "expected center coordinates and a scale"));
            }
            let last = v.pop().expect("nonempty");
            Ok((v, last))
        };
        match split(s) {
            ("one", None) => Ok(FieldSpec::One),
            ("random", None) => Ok(FieldSpec::Random),
            ("indicator", Some(a)) => {
                let (center, r) = center_and(a)?;
                Ok(FieldSpec::Indicator { center, r })
            }
            ("gaussian", Some(a)) => {
                let (center, sigma) = center_and(a)?;
                Ok(FieldSpec::Gaussian { center, sigma })
            }
            ("bump", Some(a)) => Ok(FieldSpec::Bump { sigma: numbers("field", a)?[0] }),
            ("sine", Some(a)) => Ok(FieldSpec::Sine { k: numbers("field", a)?[0] }),
            ("tab", Some(p)) => Ok(FieldSpec::Table(p.trim().to_string())),
            _ => Err(bad("field", format!("unrecognised spec `{s}`"))),
        }
    }

    pub fn build(&self, grid: &Grid, seed: u64) -> Result<ScalarField> {
        let check = |c: &[f64]| {
            if c.len() == grid.dim() {
                Ok(())
            } else {
                Err(bad("field", format!("center has {} coordinate(s), grid has dimension {}", c.len(), grid.dim())))
            }
        };
        Ok(match self {
            FieldSpec::One => ScalarField::from_fn(grid, |_| 1.0),
            FieldSpec::Indicator { center, r } => {
                check(center)?;
                ScalarField::from_fn(grid, |x| if grid::dist(x, center) < *r { 1.0 } else { 0.0 })
            }
            FieldSpec::Gaussian { center, sigma } => {
                check(center)?;
                ScalarField::from_fn(grid, |x| (-grid::dist(x, center).powi(2) / (sigma * sigma)).exp())
            }
            FieldSpec::Bump { sigma } => {
                let c: Vec<f64> = (0..grid.dim()).map(|k| 0.5 * (grid.lo()[k] + grid.hi()[k])).collect();
                ScalarField::from_fn(grid, |x| (-grid::dist(x, &c).powi(2) / (sigma * sigma)).exp())
            }
            FieldSpec::Sine { k } => ScalarField::from_fn(grid, |x| 1.0 + 0.5 * (k * x[0]).sin()),
            FieldSpec::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                ScalarField::new(grid.clone(), (0..grid.len()).map(|_| rng.gen::<f64>()).collect())?
            }
            FieldSpec::Table(p) => {
                let f = ScalarField::read_csv(Path::new(p))?;
                if f.grid.counts() != grid.counts() {
                    return Err(LabError::Config(format!("tabulated field `{p}` does not match the grid")));
                }
                f
            }
        })
    }
}

/// Operator for weighted norm bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum OpSpec {
    Identity,
    /// Constant-potential Riesz transform along axis `j` (zero-based).
    Riesz { n: f64, j: usize, local: Option<f64> },
    /// Damped Hardy–Littlewood maximal operator for `V ≡ N`.
    MaximalConst { n: f64, c: f64, rmax: f64 },
    HeatConst { n: f64, local: Option<f64> },
}

impl OpSpec {
    /// `identity` | `riesz:N,j` | `riesz-local:N,j,R` | `maximal-const:N,c,rmax` | `heat-const:N[,R]`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = split(s);
        if head == "identity" && arg.is_none() {
            return Ok(OpSpec::Identity);
        }
        let v = numbers("op", arg.ok_or_else(|| bad("op", format!("`{s}` needs parameters")))?)?;
        let axis = |x: f64| {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize - 1)
            } else {
                Err(bad("op", "axis index j must be a positive integer"))
            }
        };
        match (head, v.len()) {
            ("riesz", 2) => Ok(OpSpec::Riesz { n: v[0], j: axis(v[1])?, local: None }),
            ("riesz-local", 3) => Ok(OpSpec::Riesz { n: v[0], j: axis(v[1])?, local: Some(v[2]) }),
            ("maximal-const", 3) => Ok(OpSpec::MaximalConst { n: v[0], c: v[1], rmax: v[2] }),
            ("heat-const", 1) => Ok(OpSpec::HeatConst { n: v[0], local: None }),
            ("heat-const", 2) => Ok(OpSpec::HeatConst { n: v[0], local: Some(v[1]) }),
            _ => Err(bad("op", format!("unrecognised spec `{s}`"))),
        }
    }

    pub fn build(&self, grid: &Grid) -> Result<Box<dyn GridOperator>> {
        Ok(match *self {
            OpSpec::Identity => Box::new(Identity { grid: grid.clone() }),
            OpSpec::Riesz { n, j, local } => Box::new(RieszConstant::new(grid, n, j, local)?),
            OpSpec::MaximalConst { n, c, rmax } => {
                let radii = operators::log_grid(grid.min_spacing(), rmax, 24)?;
                Box::new(ConvolutionMaximal::constant_hl(grid, n, c, &radii)?)
            }
            OpSpec::HeatConst { n, local } => Box::new(ConvolutionMaximal::constant_heat(grid, n, &operators::log_grid(1e-4, 20.0, 60)?, local)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_grammar() {
        assert_eq!(OpSpec::parse("riesz:1,2").unwrap(), OpSpec::Riesz { n: 1.0, j: 1, local: None });
        assert_eq!(OpSpec::parse("heat-const:2,3").unwrap(), OpSpec::HeatConst { n: 2.0, local: Some(3.0) });
        assert!(OpSpec::parse("riesz:1,0").is_err());
        assert!(OpSpec::parse("riesz:1").is_err());
        assert!(OpSpec::parse("nope").is_err());
    }

    #[test]
    fn rho_grammar() {
        assert_eq!(RhoSpec::parse("const:0.5").unwrap(), RhoSpec::Constant(0.5));
        assert_eq!(RhoSpec::parse("inv-linear").unwrap(), RhoSpec::InvLinear(1.0));
        assert!(RhoSpec::parse("const:").is_err());
    }

    #[test]
    fn field_grammar() {
        let g = Grid::cube(2, -1.0, 1.0, 0.5).unwrap();
        let f = FieldSpec::parse("indicator:0,0,0.6").unwrap().build(&g, 0).unwrap();
        assert_eq!(f.values.iter().filter(|&&v| v == 1.0).count(), 5);
        assert!(FieldSpec::parse("gaussian:0,1").unwrap().build(&g, 0).is_err());
    }

    #[test]
    fn points_and_search() {
        assert_eq!(point("source", "origin", 2).unwrap(), vec![0.0, 0.0]);
        assert!(point("source", "1,2,3", 2).is_err());
        assert_eq!(search_grid("radii", "0.1,1,5").unwrap().len(), 5);
        assert!(search_grid("radii", "0.1,1").is_err());
    }
}
