//! Small dense/banded linear algebra used by the elliptic and diffusion solves.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LabError, Result};

/// LU factorization of a tridiagonal matrix with partial pivoting.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swap: Vec<bool>,
}

impl TridiagLu {
    /// `sub[i]` couples row i+1 to column i, `sup[i]` couples row i to column i+1.
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<TridiagLu> {
        let n = diag.len();
        if sub.len() + 1 != n || sup.len() + 1 != n {
            return Err(LabError::Solver("tridiagonal band lengths do not match".into()));
        }
        let mut dl = sub.to_vec();
        let mut d = diag.to_vec();
        let mut du = sup.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swap = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(LabError::Solver(format!("zero pivot in row {i}")));
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swap[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            return Err(LabError::Solver("zero pivot in last row".into()));
        }
        Ok(TridiagLu { dl, d, du, du2, swap })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                let tmp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tmp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    /// Ratio of the largest to smallest pivot magnitude; a cheap conditioning hint.
    pub fn pivot_ratio(&self) -> f64 {
        let mx = self.d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mn = self.d.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        mx / mn
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix.
/// Returns eigenvalues and the orthogonal eigenvector matrix (column m is
/// eigenvector m), stored row-major.
pub fn sym_tridiag_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(m);
    // Sort ascending for a reproducible mode order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut q = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        // fix the sign so the largest component is positive
        let v = eig.eigenvectors.column(k);
        let mut big = 0;
        for r in 0..n {
            if v[r].abs() > v[big].abs() {
                big = r;
            }
        }
        let s = if v[big] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            q[r * n + col] = s * v[r];
        }
    }
    (vals, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(sub: &[f64], diag: &[f64], sup: &[f64], x: &[f64]) -> Vec<f64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += sup[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn pivoted_solve_handles_weak_diagonal() {
        let n = 40;
        let sub = vec![-2.0; n - 1];
        let sup = vec![1.2; n - 1];
        let diag = vec![0.3; n];
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut b = matvec(&sub, &diag, &sup, &x);
        let lu = TridiagLu::factor(&sub, &diag, &sup).unwrap();
        lu.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-9, "{i}: {} vs {}", b[i], x[i]);
        }
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let diag = [2.0, 3.0, 1.0, 4.0];
        let off = [0.5, -1.0, 0.25];
        let (vals, q) = sym_tridiag_eigen(&diag, &off);
        let n = 4;
        for r in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += q[r * n + m] * vals[m] * q[c * n + m];
                }
                let want = if r == c {
                    diag[r]
                } else if r + 1 == c {
                    off[r]
                } else if c + 1 == r {
                    off[c]
                } else {
                    0.0
                };
                assert!((s - want).abs() < 1e-12);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn singular_is_reported() {
        assert!(TridiagLu::factor(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }
}
