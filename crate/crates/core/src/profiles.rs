//! The approximate self-similar profile F*, its angular factors and residual.

use crate::calculus::{hk_norm, kernel_k};
use crate::elliptic::velocity_pack;
use crate::error::Result;
use crate::field::{Frame, Parity, ScalarField};
use crate::grid::Grid;
use crate::params::Params;

/// Gamma(beta) = (sin b cos^2 b)^(alpha/3).
pub fn gamma_fn(beta: f64, alpha: f64) -> f64 {
    (beta.sin() * beta.cos().powi(2)).powf(alpha / 3.0)
}

#[derive(Debug, Clone)]
pub struct ProfilePack {
    pub alpha: f64,
    pub gamma_beta: Vec<f64>,
    pub k_beta: Vec<f64>,
    /// Discrete integral of K * Gamma over (0, pi/2).
    pub c: f64,
    pub f_star: ScalarField,
    /// y dF*/dy, closed form.
    pub f_star_dsigma: ScalarField,
    /// dF*/dbeta, closed form.
    pub f_star_dbeta: ScalarField,
}

impl ProfilePack {
    /// Closed form L12(F*)(y) = 4 alpha / (1 + y).
    pub fn l12_fstar(&self, y: f64) -> f64 {
        4.0 * self.alpha / (1.0 + y)
    }
}

pub fn build_profile(params: &Params, grid: &Grid) -> Result<ProfilePack> {
    params.validate()?;
    let alpha = params.alpha;
    let gamma_beta: Vec<f64> = grid.beta.iter().map(|&b| gamma_fn(b, alpha)).collect();
    let k_beta: Vec<f64> = grid.beta.iter().map(|&b| kernel_k(b)).collect();
    // Same angular rule as l12, so L12(F*)(0) carries no angular quadrature error.
    let c: f64 = gamma_beta.iter().zip(&k_beta).map(|(g, k)| g * k * grid.h_beta).sum();
    let radial = |s: f64| {
        let y = s.exp();
        4.0 * alpha * y / (1.0 + y).powi(2)
    };
    let radial_d = |s: f64| {
        let y = s.exp();
        4.0 * alpha * y * (1.0 - y) / (1.0 + y).powi(3)
    };
    let nb = grid.n_beta;
    let f_star = ScalarField::from_fn(grid, Frame::Y, Parity::ODD, |s, _| radial(s))
        .map_indexed(|_, j, v| v * gamma_beta[j] / c);
    let f_star_dsigma = ScalarField::from_fn(grid, Frame::Y, Parity::ODD, |s, _| radial_d(s))
        .map_indexed(|_, j, v| v * gamma_beta[j] / c);
    let dlog_gamma: Vec<f64> = (0..nb)
        .map(|j| alpha / 3.0 * (grid.cos_b[j] / grid.sin_b[j] - 2.0 * grid.tan_b[j]))
        .collect();
    let f_star_dbeta = f_star.map_indexed(|_, j, v| v * dlog_gamma[j]).with_parity(Parity::EVEN);
    Ok(ProfilePack { alpha, gamma_beta, k_beta, c, f_star, f_star_dsigma, f_star_dbeta })
}

/// Residual of the profile equation at F = F*:
/// r = F + (1+delta) y F_y + U(Phi) d_b F + V(Phi) alpha y F_y - R(Phi) F.
/// Returns r and its H^1 norm.
pub fn f_star_residual(
    grid: &Grid,
    pack: &ProfilePack,
    phi_f: &ScalarField,
    params: &Params,
) -> Result<(ScalarField, f64)> {
    residual_of(grid, &pack.f_star, &pack.f_star_dsigma, &pack.f_star_dbeta, phi_f, params)
}

/// Profile-equation residual for an arbitrary F with supplied derivatives.
pub fn residual_of(
    grid: &Grid,
    f: &ScalarField,
    f_ds: &ScalarField,
    f_db: &ScalarField,
    phi: &ScalarField,
    params: &Params,
) -> Result<(ScalarField, f64)> {
    f.check_grid(grid)?;
    phi.check_grid(grid)?;
    let vp = velocity_pack(grid, phi, params)?;
    let a = params.alpha;
    let d = params.delta;
    let mut r = f.clone();
    for k in 0..r.data.len() {
        r.data[k] = f.data[k] + (1.0 + d) * f_ds.data[k] + vp.u.data[k] * f_db.data[k]
            + vp.v.data[k] * a * f_ds.data[k]
            - vp.rcal.data[k] * f.data[k];
    }
    let n = hk_norm(grid, &r, 1)?.value;
    Ok((r, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{d_sigma, partial_beta};

    #[test]
    fn k_vanishes_at_ends() {
        assert!(kernel_k(0.0).abs() < 1e-300);
        assert!(kernel_k(std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn gamma_in_unit_interval_and_tends_to_one() {
        let p = Params::default().with_resolution(32, 64);
        let g = Grid::new(&p).unwrap();
        let pack = build_profile(&p, &g).unwrap();
        assert!(pack.gamma_beta.iter().all(|&v| v > 0.0 && v <= 1.0));
        for &b in &g.beta {
            assert!((gamma_fn(b, 1e-9) - 1.0).abs() < 1e-8);
        }
        assert!(pack.c > 0.0);
        assert!(pack.f_star.data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn closed_form_derivatives_match_stencils() {
        let p = Params::default().with_resolution(256, 64);
        let g = Grid::new(&p).unwrap();
        let pack = build_profile(&p, &g).unwrap();
        let ds = d_sigma(&g, &pack.f_star);
        assert!(ds.max_abs_diff(&pack.f_star_dsigma) < 1e-4 * pack.f_star.max_abs());
        // compare away from the non-smooth angular ends
        let db = partial_beta(&g, &pack.f_star).unwrap();
        let mut worst = 0.0f64;
        for i in 0..g.n_sigma {
            for j in 8..g.n_beta - 8 {
                worst = worst.max((db.at(i, j) - pack.f_star_dbeta.at(i, j)).abs());
            }
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn peaks_at_y_equal_one() {
        let p = Params::default().with_resolution(161, 32);
        let g = Grid::new(&p).unwrap();
        let pack = build_profile(&p, &g).unwrap();
        for j in 0..g.n_beta {
            let mut best = 0;
            for i in 0..g.n_sigma {
                if pack.f_star.at(i, j) > pack.f_star.at(best, j) {
                    best = i;
                }
            }
            assert!(g.y_axis.nodes[best].abs() < 1e-12);
        }
    }
}
