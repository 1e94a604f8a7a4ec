//! Symmetric tridiagonal eigendecomposition by implicit QL iteration.

use crate::error::{LabError, Result};

/// Eigenpairs of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagEigen {
    pub values: Vec<f64>,
    /// Column-major: `vectors[k * n + i]` is component `i` of eigenvector `k`.
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl TridiagEigen {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// Dense `f(A)` for the decomposed matrix `A`, row-major.
    pub fn apply_fn<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        let n = self.n;
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; n * n];
        for k in 0..n {
            let v = self.vector(k);
            let w = fv[k];
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let a = w * v[i];
                let row = &mut out[i * n..(i + 1) * n];
                for (j, r) in row.iter_mut().enumerate() {
                    *r += a * v[j];
                }
            }
        }
        out
    }
}

/// Decomposes the matrix with diagonal `diag` and off-diagonal `off`
/// (`off[i]` couples `i` and `i + 1`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(LabError::Numerical("tridiagonal shape mismatch".into()));
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    // z[k * n + i]: row i of column k.
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(LabError::Numerical("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (zi, zi1) = (i * n, (i + 1) * n);
                for k in 0..n {
                    let f = z[zi1 + k];
                    z[zi1 + k] = s * z[zi + k] + c * f;
                    z[zi + k] = c * z[zi + k] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(TridiagEigen { values: d, vectors: z, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_solver() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 * 0.37).sin()).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| -1.0 + 0.1 * (i as f64).cos()).collect();
        let eig = tridiagonal_eigen(&diag, &off).unwrap();
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let mut ours = eig.values.clone();
        ours.sort_by(f64::total_cmp);
        let mut theirs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-11);
        }
        for k in 0..n {
            let v = nalgebra::DVector::from_column_slice(eig.vector(k));
            let res = &a * &v - eig.values[k] * &v;
            assert!(res.norm() < 1e-10);
        }
        let id = eig.apply_fn(|_| 1.0);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[i * n + j] - want).abs() < 1e-12);
            }
        }
    }
}
