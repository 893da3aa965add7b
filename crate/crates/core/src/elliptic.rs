//! Stream-function solve for
//! -a^2 y^2 f_yy - a(5+a) y f_y - f_bb + (tan b f)_b - 6 f = source,
//! its singular/regular split, and the velocity functionals.
//!
//! On the log grid the radial part is -a^2 f_ss - 5a f_s. The angular part
//! is diagonalised once (it is a symmetrisable tridiagonal matrix), which
//! leaves one tridiagonal radial solve per angular mode.

use crate::calculus::{d_sigma, d_sigma_sigma, l12_profile, l12_radial, partial_beta, partial_beta_beta};
use crate::error::{LabError, Result};
use crate::field::{Frame, Parity, ScalarField};
use crate::grid::Grid;
use crate::linalg::{sym_tridiag_eigen, TridiagLu};
use crate::par;
use crate::params::Params;

#[derive(Debug, Clone)]
pub struct EllipticOperator {
    pub alpha: f64,
    n_sigma: usize,
    n_beta: usize,
    // angular three-point stencil per node, ghosts folded in
    ba: Vec<f64>,
    bb: Vec<f64>,
    bc: Vec<f64>,
    // similarity scaling and orthogonal eigenvectors (row-major, column = mode)
    scale: Vec<f64>,
    q: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    // radial three-point stencil
    rp: f64,
    rq: f64,
    rr: f64,
    lus: Vec<TridiagLu>,
    norm_inf: f64,
    pub cond_estimate: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub phi: ScalarField,
    /// max|s - A phi| / (|A| max|phi| + max|s|).
    pub residual: f64,
    pub iterations: usize,
}

impl EllipticOperator {
    pub fn new(grid: &Grid, params: &Params) -> Result<EllipticOperator> {
        let a = params.alpha;
        let nb = grid.n_beta;
        let ns = grid.n_sigma;
        let h = grid.h_beta;
        let hs = grid.y_axis.h;
        let mut ba = vec![0.0; nb];
        let mut bb = vec![0.0; nb];
        let mut bc = vec![0.0; nb];
        for j in 0..nb {
            let t = grid.tan_b[j];
            ba[j] = -1.0 / (h * h) - t / (2.0 * h);
            bb[j] = 2.0 / (h * h) + 1.0 + t * t - 6.0;
            bc[j] = -1.0 / (h * h) + t / (2.0 * h);
        }
        // odd reflection at both ends
        bb[0] -= ba[0];
        bb[nb - 1] -= bc[nb - 1];
        let mut scale = vec![1.0; nb];
        let mut off = vec![0.0; nb - 1];
        for j in 0..nb - 1 {
            let prod = ba[j + 1] * bc[j];
            if !(prod > 0.0) {
                return Err(LabError::Solver(format!(
                    "angular operator is not symmetrisable at node {j}; refine the angular grid"
                )));
            }
            scale[j + 1] = scale[j] * (ba[j + 1] / bc[j]).sqrt();
            off[j] = -prod.sqrt();
        }
        let smax = scale.iter().cloned().fold(0.0, f64::max);
        scale.iter_mut().for_each(|x| *x /= smax);
        let (eigenvalues, q) = sym_tridiag_eigen(&bb, &off);

        let rp = -a * a / (hs * hs) + 5.0 * a / (2.0 * hs);
        let rr = -a * a / (hs * hs) - 5.0 * a / (2.0 * hs);
        let rq = 2.0 * a * a / (hs * hs);
        let lus: Vec<TridiagLu> = par::map_collect(nb, |m| {
            let diag = vec![rq + eigenvalues[m]; ns];
            let sub = vec![rp; ns - 1];
            let mut sup = vec![rr; ns - 1];
            // Neumann at sigma_min: ghost f_{-1} = f_1
            sup[0] += rp;
            TridiagLu::factor(&sub, &diag, &sup)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let beta_norm = (0..nb).map(|j| ba[j].abs() + bb[j].abs() + bc[j].abs()).fold(0.0, f64::max);
        let norm_inf = beta_norm + rp.abs() + rq.abs() + rr.abs();
        let piv = lus.iter().map(|l| l.pivot_ratio()).fold(0.0, f64::max);
        let smin = scale.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(EllipticOperator {
            alpha: a,
            n_sigma: ns,
            n_beta: nb,
            ba,
            bb,
            bc,
            scale,
            q,
            eigenvalues,
            rp,
            rq,
            rr,
            lus,
            norm_inf,
            cond_estimate: piv / smin,
            tol: params.tol_linear,
        })
    }

    /// Discrete operator applied with the solver's boundary rules.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let (ns, nb) = (self.n_sigma, self.n_beta);
        let mut out = vec![0.0; f.len()];
        par::for_each_row(&mut out, nb, |i, row| {
            let cur = &f[i * nb..(i + 1) * nb];
            let lo: &[f64] = if i == 0 { &f[nb..2 * nb] } else { &f[(i - 1) * nb..i * nb] };
            let hi: Option<&[f64]> = if i + 1 < ns { Some(&f[(i + 1) * nb..(i + 2) * nb]) } else { None };
            for j in 0..nb {
                let mut v = self.bb[j] * cur[j];
                if j > 0 {
                    v += self.ba[j] * cur[j - 1];
                }
                if j + 1 < nb {
                    v += self.bc[j] * cur[j + 1];
                }
                v += self.rq * cur[j] + self.rp * lo[j];
                if let Some(h) = hi {
                    v += self.rr * h[j];
                }
                row[j] = v;
            }
        });
        out
    }

    fn to_modes(&self, data: &[f64]) -> Vec<f64> {
        let nb = self.n_beta;
        let mut out = vec![0.0; data.len()];
        par::for_each_row(&mut out, nb, |i, row| {
            let src = &data[i * nb..(i + 1) * nb];
            for j in 0..nb {
                let v = src[j] / self.scale[j];
                let qrow = &self.q[j * nb..(j + 1) * nb];
                for m in 0..nb {
                    row[m] += qrow[m] * v;
                }
            }
        });
        out
    }

    fn from_modes(&self, data: &[f64]) -> Vec<f64> {
        let nb = self.n_beta;
        let mut out = vec![0.0; data.len()];
        par::for_each_row(&mut out, nb, |i, row| {
            let src = &data[i * nb..(i + 1) * nb];
            for j in 0..nb {
                let qrow = &self.q[j * nb..(j + 1) * nb];
                let mut s = 0.0;
                for m in 0..nb {
                    s += qrow[m] * src[m];
                }
                row[j] = self.scale[j] * s;
            }
        });
        out
    }

    fn solve_once(&self, src: &[f64]) -> Vec<f64> {
        let (ns, nb) = (self.n_sigma, self.n_beta);
        let hat = self.to_modes(src);
        // mode-major columns
        let mut cols = vec![0.0; hat.len()];
        par::for_each_row(&mut cols, ns, |m, col| {
            for i in 0..ns {
                col[i] = hat[i * nb + m];
            }
            self.lus[m].solve_in_place(col);
        });
        let mut back = vec![0.0; hat.len()];
        par::for_each_row(&mut back, nb, |i, row| {
            for m in 0..nb {
                row[m] = cols[m * ns + i];
            }
        });
        self.from_modes(&back)
    }

    fn residual_of(&self, src: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
        let ax = self.apply(x);
        let r: Vec<f64> = src.iter().zip(&ax).map(|(s, a)| s - a).collect();
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smax = src.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = self.norm_inf * xmax + smax;
        (r, if denom > 0.0 { rmax / denom } else { 0.0 })
    }

    /// Solves `A phi = source` with iterative refinement.
    pub fn solve(&self, grid: &Grid, source: &ScalarField) -> Result<Solved> {
        source.check_grid(grid)?;
        source.check_frame(Frame::Y)?;
        if source.parity != Parity::ODD {
            return Err(LabError::Parity("stream solve needs an ODD source".into()));
        }
        if !source.is_finite() {
            return Err(LabError::Solver("source contains non-finite values".into()));
        }
        let mut x = self.solve_once(&source.data);
        let (mut r, mut rel) = self.residual_of(&source.data, &x);
        let mut iterations = 1;
        while rel > self.tol && iterations < 6 {
            let dx = self.solve_once(&r);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            let next = self.residual_of(&source.data, &x);
            r = next.0;
            rel = next.1;
            iterations += 1;
        }
        if rel > self.tol || !rel.is_finite() {
            return Err(LabError::Solver(format!(
                "relative residual {rel:.3e} above {:.1e} (condition estimate {:.3e})",
                self.tol, self.cond_estimate
            )));
        }
        let phi = ScalarField::from_data(grid, Frame::Y, Parity::ODD, x)?;
        Ok(Solved { phi, residual: rel, iterations })
    }
}

pub fn solve_phi(grid: &Grid, source: &ScalarField, params: &Params) -> Result<ScalarField> {
    Ok(EllipticOperator::new(grid, params)?.solve(grid, source)?.phi)
}

#[derive(Debug, Clone)]
pub struct Decomposed {
    /// L12(source)(y_i) at every radial node.
    pub s_of_y: Vec<f64>,
    pub phi_bar: ScalarField,
    /// sin(2b) s / (4 alpha) + phi_bar.
    pub phi: ScalarField,
    pub residual: f64,
}

/// Singular part sin(2b) L12(source)/(4a) and the operator applied to it.
/// The angular operator annihilates sin(2b), so only the radial part acts:
/// with g = int source K db and s' = -g, A(sing) = sin(2b)/(4a) (a^2 g' + 5a g).
fn singular_part(grid: &Grid, source: &ScalarField, alpha: f64) -> Result<(Vec<f64>, ScalarField, ScalarField)> {
    let s = l12_profile(grid, source)?;
    let g = l12_radial(grid, source)?;
    let gp = grid.y_axis.d1.apply_1d(&g);
    let nb = grid.n_beta;
    let mut sing = ScalarField::zeros(grid, Frame::Y, Parity::ODD);
    let mut applied = sing.clone();
    for i in 0..grid.n_sigma {
        let lg = alpha * alpha * gp[i] + 5.0 * alpha * g[i];
        for j in 0..nb {
            let w = grid.sin2b[j] / (4.0 * alpha);
            sing.set(i, j, w * s[i]);
            applied.set(i, j, w * lg);
        }
    }
    Ok((s, sing, applied))
}

pub fn decompose_with(grid: &Grid, op: &EllipticOperator, source: &ScalarField) -> Result<Decomposed> {
    source.check_frame(Frame::Y)?;
    let (s_of_y, sing, applied) = singular_part(grid, source, op.alpha)?;
    let rem = source.sub(&applied);
    let solved = op.solve(grid, &rem)?;
    let phi = sing.add(&solved.phi);
    Ok(Decomposed { s_of_y, phi_bar: solved.phi, phi, residual: solved.residual })
}

pub fn decompose_solve(grid: &Grid, source: &ScalarField, params: &Params) -> Result<Decomposed> {
    let op = EllipticOperator::new(grid, params)?;
    decompose_with(grid, &op, source)
}

/// Velocity functionals of one stream function.
#[derive(Debug, Clone)]
pub struct VelocityPack {
    pub u: ScalarField,
    pub v: ScalarField,
    pub rcal: ScalarField,
    pub lam1: ScalarField,
    pub lam2: ScalarField,
    pub lam3: ScalarField,
    pub lam4: ScalarField,
}

pub fn velocity_pack(grid: &Grid, phi: &ScalarField, params: &Params) -> Result<VelocityPack> {
    phi.check_grid(grid)?;
    let a = params.alpha;
    let nb = grid.n_beta;
    let guard = (0..phi.data.len())
        .map(|k| (grid.tan_b[k % nb] * phi.data[k]).abs())
        .fold(0.0, f64::max);
    if guard > params.tan_guard {
        return Err(LabError::Overflow(format!(
            "|tan(b) Phi| reaches {guard:.3e}, above the guard {:.1e}",
            params.tan_guard
        )));
    }
    let ds = d_sigma(grid, phi);
    let dss = d_sigma_sigma(grid, phi);
    let db = partial_beta(grid, phi)?;
    let dbb = partial_beta_beta(grid, phi)?;
    let dsb = partial_beta(grid, &ds)?;
    let n = phi.data.len();
    let none = |d: Vec<f64>| ScalarField { data: d, parity: Parity::NONE, ..phi.clone() };
    let (mut u, mut v, mut r) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut l1, mut l2, mut l3, mut l4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let j = k % nb;
        let (s, c, t, s2) = (grid.sin_b[j], grid.cos_b[j], grid.tan_b[j], grid.sin2b[j]);
        let c2 = c * c - s * s;
        let sc = s * c;
        let f = phi.data[k];
        let fs = a * ds.data[k];
        let fss = a * a * dss.data[k];
        let fb = db.data[k];
        let fbb = dbb.data[k];
        let fsb = a * dsb.data[k];
        u[k] = -3.0 * f - fs;
        v[k] = fb - t * f;
        r[k] = 2.0 * t * f + t * fs + fb;
        l1[k] = sc * fss + c2 * fsb - sc * fbb + s2 * fs + c2 * fb;
        l2[k] = -c * c * fss + s2 * fsb - s * s * fbb - 2.0 * (1.0 + c * c) * fs
            + (t + s2) * fb
            + (t * t - 3.0) * f;
        l3[k] = s * s * fss + s2 * fsb + c * c * fbb + (1.0 + 2.0 * s * s) * fs + s2 * fb + 2.0 * f;
        l4[k] = -sc * fss - c2 * fsb + sc * fbb - (t + s2) * fs - 2.0 * c * c * fb - 2.0 * t * f;
    }
    Ok(VelocityPack {
        u: ScalarField { data: u, parity: Parity::EVEN, ..phi.clone() },
        v: none(v),
        rcal: none(r),
        lam1: none(l1),
        lam2: none(l2),
        lam3: none(l3),
        lam4: none(l4),
    })
}

/// Physical (u_r, u_3) on the (rho, beta) nodes for a y-frame Phi_W, with
/// Phi_Omega = Phi_W / lambda and R = lambda^(1+delta) y / mu.
pub fn physical_velocity(
    grid: &Grid,
    phi: &ScalarField,
    lambda: f64,
    mu: f64,
    params: &Params,
) -> Result<(ScalarField, ScalarField)> {
    phi.check_grid(grid)?;
    phi.check_frame(Frame::Y)?;
    let a = params.alpha;
    let nb = grid.n_beta;
    let ds = d_sigma(grid, phi);
    let db = partial_beta(grid, phi)?;
    let ln_shift = (1.0 + params.delta) * lambda.ln() - mu.ln();
    let mut ur = phi.clone().with_parity(Parity::NONE);
    let mut u3 = ur.clone();
    for i in 0..grid.n_sigma {
        let ln_rho = (grid.y_axis.nodes[i] + ln_shift) / a;
        if ln_rho > 700.0 {
            return Err(LabError::Overflow(format!("rho = e^{ln_rho:.1} is not representable")));
        }
        let rho = ln_rho.exp();
        for j in 0..nb {
            let k = i * nb + j;
            let (s, c) = (grid.sin_b[j], grid.cos_b[j]);
            let f = phi.data[k] / lambda;
            let fs = a * ds.data[k] / lambda;
            let fb = db.data[k] / lambda;
            ur.data[k] = rho * (2.0 * s * f + s * fs + c * fb);
            u3.data[k] = rho * (-f / c - 2.0 * c * f - c * fs + s * fb);
        }
    }
    Ok((ur, u3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::build_profile;

    fn manufactured(g: &Grid, a: f64) -> (ScalarField, ScalarField) {
        let phi = ScalarField::from_fn(g, Frame::Y, Parity::ODD, |s, b| (2.0 * b).sin() * (-s * s).exp());
        let src = ScalarField::from_fn(g, Frame::Y, Parity::ODD, |s, b| {
            (-a * a * (4.0 * s * s - 2.0) + 10.0 * a * s) * (-s * s).exp() * (2.0 * b).sin()
        });
        (phi, src)
    }

    #[test]
    fn zero_source_gives_zero() {
        let p = Params::default().with_resolution(32, 16);
        let g = Grid::new(&p).unwrap();
        let z = ScalarField::zeros(&g, Frame::Y, Parity::ODD);
        let s = EllipticOperator::new(&g, &p).unwrap().solve(&g, &z).unwrap();
        assert_eq!(s.phi.max_abs(), 0.0);
    }

    #[test]
    fn manufactured_second_order() {
        let mut errs = vec![];
        for n in [64, 128] {
            let mut p = Params::default().with_resolution(n, n);
            p.sigma_min = -8.0;
            p.sigma_max = 8.0;
            let g = Grid::new(&p).unwrap();
            let (phi, src) = manufactured(&g, p.alpha);
            let s = EllipticOperator::new(&g, &p).unwrap().solve(&g, &src).unwrap();
            assert!(s.residual <= p.tol_linear);
            errs.push(s.phi.max_abs_diff(&phi));
        }
        let ratio = errs[0] / errs[1];
        assert!((3.5..=4.5).contains(&ratio), "{errs:?}");
    }

    #[test]
    fn apply_matches_inverse() {
        let p = Params::default().with_resolution(24, 20);
        let g = Grid::new(&p).unwrap();
        let op = EllipticOperator::new(&g, &p).unwrap();
        let (_, src) = manufactured(&g, p.alpha);
        let s = op.solve(&g, &src).unwrap();
        let back = op.apply(&s.phi.data);
        let worst = back.iter().zip(&src.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst < 1e-8 * src.max_abs().max(1.0));
    }

    #[test]
    fn rejects_even_source() {
        let p = Params::default().with_resolution(16, 16);
        let g = Grid::new(&p).unwrap();
        let z = ScalarField::zeros(&g, Frame::Y, Parity::EVEN);
        assert!(solve_phi(&g, &z, &p).is_err());
    }

    #[test]
    fn singular_profile_of_fstar() {
        let p = Params::default().with_resolution(256, 32);
        let g = Grid::new(&p).unwrap();
        let pack = build_profile(&p, &g).unwrap();
        let d = decompose_solve(&g, &pack.f_star, &p).unwrap();
        // the truncated tail beyond sigma_max is ~ e^(s - sigma_max) relative
        for (i, &s) in g.y_axis.nodes.iter().enumerate().filter(|(_, &s)| s <= 5.0) {
            let want = pack.l12_fstar(s.exp());
            assert!((d.s_of_y[i] - want).abs() <= 1e-6 * want + 1e-12, "{i}");
        }
    }

    #[test]
    fn constant_phi_pack() {
        let p = Params::default().with_resolution(16, 16);
        let g = Grid::new(&p).unwrap();
        let c0 = 0.7;
        // constants are EVEN, which the angular stencils accept
        let phi = ScalarField::from_fn(&g, Frame::Y, Parity::EVEN, |_, _| c0);
        let vp = velocity_pack(&g, &phi, &p).unwrap();
        for i in 0..g.n_sigma {
            for j in 0..g.n_beta {
                let t = g.tan_b[j];
                assert!((vp.u.at(i, j) + 3.0 * c0).abs() < 1e-12);
                assert!((vp.v.at(i, j) + t * c0).abs() < 1e-12);
                assert!((vp.rcal.at(i, j) - 2.0 * t * c0).abs() < 1e-12);
                assert!((vp.lam2.at(i, j) - (t * t - 3.0) * c0).abs() < 1e-9 * (1.0 + t * t));
            }
        }
        let (ur, u3) = physical_velocity(&g, &phi, 1.0, 1.0, &p).unwrap();
        let i = g.n_sigma / 2;
        let rho = (g.y_axis.nodes[i] / p.alpha).exp();
        for j in 0..g.n_beta {
            let (s, c) = (g.sin_b[j], g.cos_b[j]);
            assert!((ur.at(i, j) - rho * 2.0 * s * c0).abs() < 1e-12 * rho.max(1.0));
            assert!((u3.at(i, j) - rho * (-c0 / c - 2.0 * c * c0)).abs() < 1e-10 * rho.max(1.0) / c);
        }
    }

    #[test]
    fn velocity_divergence_free() {
        // R + Lam1 + Lam4 = (1/r) d_r(r u_r) + d_3 u_3
        let p = Params::default().with_resolution(32, 32);
        let g = Grid::new(&p).unwrap();
        let (phi, _) = manufactured(&g, p.alpha);
        let vp = velocity_pack(&g, &phi, &p).unwrap();
        let div = vp.rcal.add(&vp.lam1).add(&vp.lam4);
        assert!(div.max_abs() < 1e-12 * vp.lam1.max_abs().max(1.0));
    }
}
