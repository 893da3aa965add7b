//! Finite-difference stencils, interpolation and cumulative quadrature on
//! uniform axes.

use crate::error::{LabError, Result};
use crate::field::Sym;
use crate::par;

/// Fornberg's algorithm: weights `w[d][k]` for the d-th derivative at `x0`
/// from samples at `xs`, for d = 0..=m.
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One stencil per node: output[i] = sum_k w[k] * input[start + k].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialOp {
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl RadialOp {
    /// Fourth-order derivative of the given order (1 or 2) on `n` uniform
    /// nodes with spacing `h`; shifted one-sided stencils at the ends.
    pub fn derivative(n: usize, h: f64, order: usize) -> RadialOp {
        let width = if order == 1 { 5 } else { 6 };
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let (start, len) = if i >= 2 && i + 2 < n {
                (i - 2, 5)
            } else if i < 2 {
                (0, width)
            } else {
                (n - width, width)
            };
            let xs: Vec<f64> = (start..start + len).map(|k| k as f64).collect();
            let w = fornberg(i as f64, &xs, order);
            let scale = h.powi(order as i32);
            rows.push((start, w[order].iter().map(|x| x / scale).collect()));
        }
        RadialOp { rows }
    }

    /// Applies the operator along the radial index of row-major data.
    pub fn apply(&self, data: &[f64], n_beta: usize) -> Vec<f64> {
        let mut out = vec![0.0; data.len()];
        par::for_each_row(&mut out, n_beta, |i, row| {
            let (start, w) = &self.rows[i];
            for (k, wk) in w.iter().enumerate() {
                let src = &data[(start + k) * n_beta..(start + k + 1) * n_beta];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += wk * s;
                }
            }
        });
        out
    }

    pub fn apply_1d(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(start, w)| w.iter().enumerate().map(|(k, wk)| wk * v[start + k]).sum())
            .collect()
    }
}

/// Index and sign of the value feeding stencil slot `m` (may be a ghost).
fn ghost(m: isize, n: usize, lo: Sym, hi: Sym) -> Option<(usize, f64)> {
    let n_i = n as isize;
    if m < 0 {
        lo.sign().map(|s| ((-m - 1) as usize, s))
    } else if m >= n_i {
        hi.sign().map(|s| ((2 * n_i - m - 1) as usize, s))
    } else {
        Some((m as usize, 1.0))
    }
}

/// Angular stencil with parity ghosts resolved to (index, sign) pairs.
#[derive(Debug, Clone)]
pub struct BetaOp {
    taps: Vec<Vec<(usize, f64)>>,
}

pub const D1_C4: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
pub const D2_C4: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
pub const KO6: [f64; 7] = [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0];

impl BetaOp {
    /// Centered stencil `coef` (odd length) scaled by `1/h^power`.
    pub fn new(n: usize, h: f64, power: i32, coef: &[f64], lo: Sym, hi: Sym) -> Result<BetaOp> {
        let half = (coef.len() / 2) as isize;
        let scale = 1.0 / h.powi(power);
        let mut taps = Vec::with_capacity(n);
        for j in 0..n {
            let mut t: Vec<(usize, f64)> = Vec::with_capacity(coef.len());
            for (k, c) in coef.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                let m = j as isize + k as isize - half;
                match ghost(m, n, lo, hi) {
                    Some((idx, s)) => t.push((idx, s * c * scale)),
                    None => {
                        return Err(LabError::Parity(format!(
                            "angular stencil at node {j} needs a ghost value but parity is NONE"
                        )))
                    }
                }
            }
            taps.push(t);
        }
        Ok(BetaOp { taps })
    }

    pub fn d1(n: usize, h: f64, lo: Sym, hi: Sym) -> Result<BetaOp> {
        BetaOp::new(n, h, 1, &D1_C4, lo, hi)
    }

    pub fn d2(n: usize, h: f64, lo: Sym, hi: Sym) -> Result<BetaOp> {
        BetaOp::new(n, h, 2, &D2_C4, lo, hi)
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.taps) {
            let mut s = 0.0;
            for &(idx, w) in t {
                s += w * row[idx];
            }
            *o = s;
        }
    }

    pub fn apply(&self, data: &[f64], n_beta: usize) -> Vec<f64> {
        let mut out = vec![0.0; data.len()];
        par::for_each_row(&mut out, n_beta, |i, row| {
            self.apply_row(&data[i * n_beta..(i + 1) * n_beta], row)
        });
        out
    }
}

/// What a radial resampler returns outside the source axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outside {
    Zero,
    Clamp,
}

/// Cubic Lagrange weights at fractional index `pos` on `n` nodes.
/// Returns `None` when `pos` lies outside `[0, n-1]` under [`Outside::Zero`].
pub fn cubic_weights(pos: f64, n: usize, outside: Outside) -> Option<(usize, [f64; 4])> {
    let last = (n - 1) as f64;
    let p = if pos < 0.0 || pos > last {
        match outside {
            Outside::Zero => return None,
            Outside::Clamp => pos.clamp(0.0, last),
        }
    } else {
        pos
    };
    let base = (p.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let t = p - base as f64;
    let mut w = [0.0; 4];
    for (k, wk) in w.iter_mut().enumerate() {
        let mut v = 1.0;
        for m in 0..4 {
            if m != k {
                v *= (t - m as f64) / (k as f64 - m as f64);
            }
        }
        *wk = v;
    }
    Some((base, w))
}

/// Resamples row-major `data` (radial rows of width `n_beta`) at fractional
/// source positions `positions` (one per output row).
pub fn resample_rows(data: &[f64], n_rows: usize, n_beta: usize, positions: &[f64], outside: Outside) -> Vec<f64> {
    let mut out = vec![0.0; positions.len() * n_beta];
    par::for_each_row(&mut out, n_beta, |i, row| {
        if let Some((base, w)) = cubic_weights(positions[i], n_rows, outside) {
            for (k, wk) in w.iter().enumerate() {
                let src = &data[(base + k) * n_beta..(base + k + 1) * n_beta];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += wk * s;
                }
            }
        }
    });
    out
}

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

const QN: usize = 8;

fn lagrange_basis(x: f64, k: usize) -> f64 {
    let mut v = 1.0;
    for m in 0..QN {
        if m != k {
            v *= (x - m as f64) / (k as f64 - m as f64);
        }
    }
    v
}

/// Integrals over `[a, b]` (local index units) of the 8 Lagrange basis
/// polynomials on nodes 0..8.
fn basis_integrals(a: f64, b: f64) -> [f64; QN] {
    let mut out = [0.0; QN];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    for q in 0..4 {
        for sgn in [-1.0, 1.0] {
            let x = mid + sgn * half * GL8_X[q];
            for (k, o) in out.iter_mut().enumerate() {
                *o += half * GL8_W[q] * lagrange_basis(x, k);
            }
        }
    }
    out
}

/// Cumulative quadrature on a uniform axis from a degree-7 local interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct CellQuadrature {
    n: usize,
    h: f64,
    /// (first node, weights) for each cell [c, c+1].
    cells: Vec<(usize, [f64; QN])>,
}

impl CellQuadrature {
    pub fn new(n: usize, h: f64) -> CellQuadrature {
        assert!(n >= QN, "cell quadrature needs at least {QN} nodes");
        let cells = (0..n - 1)
            .map(|c| {
                let start = Self::window(c, n);
                let off = (c - start) as f64;
                let mut w = basis_integrals(off, off + 1.0);
                w.iter_mut().for_each(|x| *x *= h);
                (start, w)
            })
            .collect();
        CellQuadrature { n, h, cells }
    }

    fn window(c: usize, n: usize) -> usize {
        (c as isize - 3).clamp(0, (n - QN) as isize) as usize
    }

    pub fn cell_integral(&self, g: &[f64], c: usize) -> f64 {
        let (start, w) = &self.cells[c];
        w.iter().zip(&g[*start..*start + QN]).map(|(a, b)| a * b).sum()
    }

    /// Integral of the interpolant of `g` from fractional index `pos` to the end.
    pub fn tail_from(&self, g: &[f64], pos: f64) -> f64 {
        let last = (self.n - 1) as f64;
        if pos >= last {
            return 0.0;
        }
        let pos = pos.max(0.0);
        let c = (pos.floor() as usize).min(self.n - 2);
        let start = Self::window(c, self.n);
        let a = pos - start as f64;
        let b = (c + 1 - start) as f64;
        let w = basis_integrals(a, b);
        let mut head = 0.0;
        for k in 0..QN {
            head += self.h * w[k] * g[start + k];
        }
        let rest: Vec<f64> = (c + 1..self.n - 1).map(|cc| self.cell_integral(g, cc)).collect();
        head + par::pairwise_sum(&rest)
    }

    /// `out[i]` = integral from node i to the last node.
    pub fn tails(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for c in (0..self.n - 1).rev() {
            out[c] = out[c + 1] + self.cell_integral(g, c);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_reproduces_centered_coefficients() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fornberg(0.0, &xs, 2);
        for k in 0..5 {
            assert!((w[1][k] - D1_C4[k]).abs() < 1e-14);
            assert!((w[2][k] - D2_C4[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn one_sided_derivative_exact_on_quartics() {
        let n = 20;
        let h = 0.1;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = x.iter().map(|t| t.powi(4) - 2.0 * t * t + t).collect();
        let d1 = RadialOp::derivative(n, h, 1).apply_1d(&f);
        let d2 = RadialOp::derivative(n, h, 2).apply_1d(&f);
        for i in 0..n {
            let t = x[i];
            assert!((d1[i] - (4.0 * t.powi(3) - 4.0 * t + 1.0)).abs() < 1e-10);
            assert!((d2[i] - (12.0 * t * t - 4.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn beta_op_needs_parity() {
        assert!(BetaOp::d1(16, 0.1, Sym::None, Sym::Odd).is_err());
        assert!(BetaOp::d1(16, 0.1, Sym::Odd, Sym::Even).is_ok());
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let n = 10;
        let f: Vec<f64> = (0..n).map(|i| (i as f64).powi(3) - i as f64).collect();
        for pos in [0.0, 0.3, 4.5, 8.9, 9.0] {
            let (b, w) = cubic_weights(pos, n, Outside::Zero).unwrap();
            let v: f64 = (0..4).map(|k| w[k] * f[b + k]).sum();
            assert!((v - (pos.powi(3) - pos)).abs() < 1e-10, "pos {pos}");
        }
        assert!(cubic_weights(-0.1, n, Outside::Zero).is_none());
        assert!(cubic_weights(12.0, n, Outside::Clamp).is_some());
    }

    #[test]
    fn cell_quadrature_integrates_polynomials_exactly() {
        let n = 12;
        let h = 0.5;
        let g: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(7)).collect();
        let q = CellQuadrature::new(n, h);
        let l = (n - 1) as f64 * h;
        let t = q.tails(&g);
        assert!((t[0] - l.powi(8) / 8.0).abs() / (l.powi(8) / 8.0) < 1e-12);
        let pos = 2.3;
        let a = pos * h;
        let want = (l.powi(8) - a.powi(8)) / 8.0;
        assert!((q.tail_from(&g, pos) - want).abs() / want < 1e-12);
    }
}
