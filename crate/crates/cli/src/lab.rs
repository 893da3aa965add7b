//! Diagnostics behind the `profile` and `solve` subcommands.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use bsq_core::calculus::{hk_norm, l12};
use bsq_core::elliptic::{decompose_with, velocity_pack, EllipticOperator};
use bsq_core::profiles::{build_profile, f_star_residual, ProfilePack};
use bsq_core::{Frame, Grid, Params, Parity, Result, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L12Sample {
    pub y: f64,
    pub measured: f64,
    pub closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub alpha: f64,
    pub n_sigma: usize,
    pub n_beta: usize,
    pub c: f64,
    pub residual_h1: f64,
    pub f_star_h1: f64,
    pub relative_residual_h1: f64,
    /// sup |U(Phi_F*) + 3 sin(2b)/(1+y)| over the grid.
    pub u_leading_distance: f64,
    pub l12: Vec<L12Sample>,
}

pub struct ProfileOutput {
    pub report: ProfileReport,
    pub grid: Grid,
    pub pack: ProfilePack,
    pub phi_f: ScalarField,
    pub residual: ScalarField,
}

pub fn profile(params: &Params) -> Result<ProfileOutput> {
    let grid = Grid::new(params)?;
    let pack = build_profile(params, &grid)?;
    let op = EllipticOperator::new(&grid, params)?;
    let phi_f = decompose_with(&grid, &op, &pack.f_star)?.phi;
    let (residual, residual_h1) = f_star_residual(&grid, &pack, &phi_f, params)?;
    let f_star_h1 = hk_norm(&grid, &pack.f_star, 1)?.value;
    let vp = velocity_pack(&grid, &phi_f, params)?;
    let nb = grid.n_beta;
    let mut dist = 0.0f64;
    for i in 0..grid.n_sigma {
        let y = grid.y_axis.nodes[i].exp();
        for j in 0..nb {
            dist = dist.max((vp.u.at(i, j) + 3.0 * grid.sin2b[j] / (1.0 + y)).abs());
        }
    }
    let l12 = [0.0, 0.5, 1.0, 2.0]
        .into_iter()
        .map(|y| Ok(L12Sample { y, measured: l12(&grid, &pack.f_star, y)?, closed_form: pack.l12_fstar(y) }))
        .collect::<Result<Vec<_>>>()?;
    let report = ProfileReport {
        alpha: params.alpha,
        n_sigma: grid.n_sigma,
        n_beta: nb,
        c: pack.c,
        residual_h1,
        f_star_h1,
        relative_residual_h1: residual_h1 / f_star_h1,
        u_leading_distance: dist,
        l12,
    };
    Ok(ProfileOutput { report, grid, pack, phi_f, residual })
}

/// Phi = sin(2b) cos^2(b) exp(-s^2/16) and the source it produces.
pub fn manufactured(grid: &Grid, alpha: f64) -> (ScalarField, ScalarField) {
    let a = alpha;
    let phi = ScalarField::from_fn(grid, Frame::Y, Parity::ODD, |s, b| {
        (2.0 * b).sin() * b.cos().powi(2) * (-s * s / 16.0).exp()
    });
    let src = ScalarField::from_fn(grid, Frame::Y, Parity::ODD, |s, b| {
        let radial = a * (a * (8.0 - s * s) + 40.0 * s) / 64.0;
        let angular = (2.0 * b).sin() * b.cos().powi(2) * radial - (2.0 * b).sin() + 3.5 * (4.0 * b).sin();
        angular * (-s * s / 16.0).exp()
    });
    (phi, src)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub alpha: f64,
    pub n_sigma: usize,
    pub n_beta: usize,
    pub tol_linear: f64,
    pub manufactured_error: f64,
    pub manufactured_residual: f64,
    pub manufactured_seconds: f64,
    /// sup |Phi_direct - Phi_split| for the source F*.
    pub direct_vs_split: f64,
    pub direct_residual: f64,
    pub split_residual: f64,
    pub cond_estimate: f64,
}

pub fn solve(params: &Params) -> Result<SolveReport> {
    let grid = Grid::new(params)?;
    let t = Instant::now();
    let op = EllipticOperator::new(&grid, params)?;
    let (phi, src) = manufactured(&grid, params.alpha);
    let m = op.solve(&grid, &src)?;
    let manufactured_seconds = t.elapsed().as_secs_f64();
    let pack = build_profile(params, &grid)?;
    let direct = op.solve(&grid, &pack.f_star)?;
    let split = decompose_with(&grid, &op, &pack.f_star)?;
    Ok(SolveReport {
        alpha: params.alpha,
        n_sigma: grid.n_sigma,
        n_beta: grid.n_beta,
        tol_linear: params.tol_linear,
        manufactured_error: m.phi.max_abs_diff(&phi),
        manufactured_residual: m.residual,
        manufactured_seconds,
        direct_vs_split: direct.phi.max_abs_diff(&split.phi),
        direct_residual: direct.residual,
        split_residual: split.residual,
        cond_estimate: op.cond_estimate,
    })
}
