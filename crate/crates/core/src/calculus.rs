//! Derivatives, the L12 functional, and the weighted norms H^k, W1..W3.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Frame, ScalarField};
use crate::grid::Grid;
use crate::par;
use crate::stencil::BetaOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOp {
    /// y d/dy (or ybar d/dybar), i.e. d/dsigma on the log grid.
    DSigma,
    PartialBeta,
    /// sin(2 beta) d/dbeta.
    DBeta,
    /// rho_bar d/drho_bar = alpha d/dsigma.
    DRhobar,
}

pub fn apply_derivative(grid: &Grid, f: &ScalarField, op: DerivOp) -> Result<ScalarField> {
    f.check_grid(grid)?;
    match op {
        DerivOp::DSigma => Ok(d_sigma(grid, f)),
        DerivOp::DRhobar => Ok(d_sigma(grid, f).scale(grid.alpha)),
        DerivOp::PartialBeta => partial_beta(grid, f),
        DerivOp::DBeta => {
            let mut d = partial_beta(grid, f)?;
            let nb = grid.n_beta;
            for (k, x) in d.data.iter_mut().enumerate() {
                *x *= grid.sin2b[k % nb];
            }
            d.parity = f.parity;
            Ok(d)
        }
    }
}

pub fn d_sigma(grid: &Grid, f: &ScalarField) -> ScalarField {
    let ax = grid.axis(f.frame);
    ScalarField { data: ax.d1.apply(&f.data, grid.n_beta), ..f.clone() }
}

pub fn d_sigma_sigma(grid: &Grid, f: &ScalarField) -> ScalarField {
    let ax = grid.axis(f.frame);
    ScalarField { data: ax.d2.apply(&f.data, grid.n_beta), ..f.clone() }
}

pub fn partial_beta(grid: &Grid, f: &ScalarField) -> Result<ScalarField> {
    let op = BetaOp::d1(grid.n_beta, grid.h_beta, f.parity.lo, f.parity.hi)?;
    Ok(ScalarField { data: op.apply(&f.data, grid.n_beta), parity: f.parity.flip(), ..f.clone() })
}

pub fn partial_beta_beta(grid: &Grid, f: &ScalarField) -> Result<ScalarField> {
    let op = BetaOp::d2(grid.n_beta, grid.h_beta, f.parity.lo, f.parity.hi)?;
    Ok(ScalarField { data: op.apply(&f.data, grid.n_beta), ..f.clone() })
}

/// alpha^2 D^2 f + alpha D f + (1/cos b) d_b(cos b d_b f) for a ybar-frame field.
pub fn laplace_tilde(grid: &Grid, f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    f.check_grid(grid)?;
    f.check_frame(Frame::YBar)?;
    let d1 = d_sigma(grid, f);
    let d2 = d_sigma_sigma(grid, f);
    let b1 = partial_beta(grid, f)?;
    let b2 = partial_beta_beta(grid, f)?;
    let nb = grid.n_beta;
    let mut out = f.clone();
    for k in 0..out.data.len() {
        out.data[k] = alpha * alpha * d2.data[k] + alpha * d1.data[k] + b2.data[k]
            - grid.tan_b[k % nb] * b1.data[k];
    }
    Ok(out)
}

/// K(beta) = 3 sin(beta) cos^2(beta).
pub fn kernel_k(beta: f64) -> f64 {
    3.0 * beta.sin() * beta.cos().powi(2)
}

/// Angular moment g(sigma_i) = sum_j f_ij K(beta_j) h_beta.
pub fn l12_radial(grid: &Grid, f: &ScalarField) -> Result<Vec<f64>> {
    f.check_grid(grid)?;
    f.check_frame(Frame::Y)?;
    let kw: Vec<f64> = grid.beta.iter().map(|&b| kernel_k(b) * grid.h_beta).collect();
    Ok((0..grid.n_sigma)
        .map(|i| f.row(i).iter().zip(&kw).map(|(a, b)| a * b).sum())
        .collect())
}

/// L12(f)(y0) = integral over z > y0 and beta of f K dz/z dbeta.
/// `y0` at or below the grid's lowest y gives the full truncated integral.
pub fn l12(grid: &Grid, f: &ScalarField, y0: f64) -> Result<f64> {
    let ax = &grid.y_axis;
    if !(y0 >= 0.0) {
        return Err(LabError::Domain(format!("l12 lower limit must be >= 0, got {y0}")));
    }
    if y0 > ax.max.exp() {
        return Err(LabError::Domain(format!(
            "l12 lower limit {y0} lies above the radial truncation e^{}",
            ax.max
        )));
    }
    let g = l12_radial(grid, f)?;
    let pos = if y0 <= 0.0 { 0.0 } else { ax.position(y0.ln()).max(0.0) };
    Ok(ax.quad.tail_from(&g, pos))
}

/// L12(f)(y_i) at every radial node.
pub fn l12_profile(grid: &Grid, f: &ScalarField) -> Result<Vec<f64>> {
    let g = l12_radial(grid, f)?;
    Ok(grid.y_axis.quad.tails(&g))
}

/// Integral of f K over y0 < z < y1.
pub fn l12_between(grid: &Grid, f: &ScalarField, y0: f64, y1: f64) -> Result<f64> {
    Ok(l12(grid, f, y0)? - l12(grid, f, y1)?)
}

/// A norm value with the fraction of its square carried by the outermost
/// decade at either radial end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub tail_fraction: f64,
}

/// One term of a weighted inner product: sum_ij a_ij b_ij rad_i ang_j.
struct Term<'a> {
    a: &'a ScalarField,
    b: &'a ScalarField,
    ang: &'a [f64],
}

fn row_totals(terms: &[Term], rad: &[f64], nb: usize) -> Vec<f64> {
    par::map_collect(rad.len(), |i| {
        let mut s = 0.0;
        for t in terms {
            let ra = &t.a.data[i * nb..(i + 1) * nb];
            let rb = &t.b.data[i * nb..(i + 1) * nb];
            let mut r = 0.0;
            for j in 0..nb {
                r += ra[j] * rb[j] * t.ang[j];
            }
            s += r;
        }
        s * rad[i]
    })
}

fn tail_fraction(rows: &[f64], axis_nodes: &[f64], decade: f64) -> f64 {
    let total = par::pairwise_sum(rows);
    if total == 0.0 {
        return 0.0;
    }
    let lo = axis_nodes[0] + decade;
    let hi = axis_nodes[axis_nodes.len() - 1] - decade;
    let tail: Vec<f64> = rows
        .iter()
        .zip(axis_nodes)
        .filter(|(_, &s)| s <= lo || s >= hi)
        .map(|(r, _)| *r)
        .collect();
    (par::pairwise_sum(&tail) / total).abs()
}

/// table[j][i] = D_beta^i (scale * d_sigma)^j f for i + j <= k.
fn derivative_table(grid: &Grid, f: &ScalarField, k: usize, scale: f64, need_beta: bool) -> Result<Vec<Vec<ScalarField>>> {
    let mut table = Vec::with_capacity(k + 1);
    let mut radial = f.clone();
    for j in 0..=k {
        if j > 0 {
            radial = d_sigma(grid, &radial).scale(scale);
        }
        let mut col = vec![radial.clone()];
        if need_beta {
            for _ in 1..=(k - j) {
                let next = apply_derivative(grid, col.last().unwrap(), DerivOp::DBeta)?;
                col.push(next);
            }
        }
        table.push(col);
    }
    Ok(table)
}

fn sin2b_pow(grid: &Grid, p: f64) -> Vec<f64> {
    grid.sin2b.iter().map(|s| s.powf(p) * grid.h_beta).collect()
}

fn cos_pow(grid: &Grid, p: f64) -> Vec<f64> {
    grid.cos_b.iter().map(|c| c.powf(p) * grid.h_beta).collect()
}

/// Weighted Sobolev weights read off the parameters used by the grid.
#[derive(Debug, Clone, Copy)]
pub struct Exponents {
    pub eta: f64,
    pub gamma: f64,
}

impl Exponents {
    pub fn for_alpha(alpha: f64) -> Self {
        Exponents { eta: crate::params::ETA, gamma: 1.0 + alpha / 10.0 }
    }
}

fn hk_rows(grid: &Grid, f: &ScalarField, g: &ScalarField, k: usize) -> Result<Vec<f64>> {
    f.check_grid(grid)?;
    f.check_frame(Frame::Y)?;
    g.check_frame(Frame::Y)?;
    f.same_shape(g)?;
    let ex = Exponents::for_alpha(grid.alpha);
    let ax = &grid.y_axis;
    let rad: Vec<f64> = ax
        .nodes
        .iter()
        .zip(&ax.weights)
        .map(|(&s, &w)| {
            let y = s.exp();
            // ((1+y)^2/y^2)^2 with dy = y dsigma
            ((1.0 + y) / y).powi(4) * y * w
        })
        .collect();
    let w_eta = sin2b_pow(grid, -ex.eta);
    let w_gamma = sin2b_pow(grid, -ex.gamma);
    let need_beta = k >= 1;
    let tf = derivative_table(grid, f, k, 1.0, need_beta)?;
    let tg = if std::ptr::eq(f, g) { None } else { Some(derivative_table(grid, g, k, 1.0, need_beta)?) };
    let tg_ref = tg.as_ref().unwrap_or(&tf);
    let mut terms = Vec::new();
    for j in 0..=k {
        terms.push(Term { a: &tf[j][0], b: &tg_ref[j][0], ang: &w_eta });
    }
    for j in 0..k {
        for i in 1..=(k - j) {
            terms.push(Term { a: &tf[j][i], b: &tg_ref[j][i], ang: &w_gamma });
        }
    }
    Ok(row_totals(&terms, &rad, grid.n_beta))
}

pub fn hk_inner(grid: &Grid, f: &ScalarField, g: &ScalarField, k: usize) -> Result<f64> {
    Ok(par::pairwise_sum(&hk_rows(grid, f, g, k)?))
}

pub fn hk_norm(grid: &Grid, f: &ScalarField, k: usize) -> Result<NormValue> {
    let rows = hk_rows(grid, f, f, k)?;
    let sq = par::pairwise_sum(&rows);
    Ok(NormValue {
        value: sq.max(0.0).sqrt(),
        tail_fraction: tail_fraction(&rows, &grid.y_axis.nodes, std::f64::consts::LN_10),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WNorm {
    W1,
    W2,
    W3,
}

/// Radial quadrature weights of a W norm: rho^p d rho = rho^(p+1) dsigma_bar / alpha.
fn w_radial(grid: &Grid, which: WNorm) -> Vec<f64> {
    let alpha = grid.alpha;
    let rho_pow = match which {
        WNorm::W2 => crate::params::ETA,
        _ => 2.0,
    };
    let ax = &grid.ybar_axis;
    ax.nodes
        .iter()
        .zip(&ax.weights)
        .map(|(&s, &w)| ((rho_pow + 1.0) * s / alpha).exp() * w / alpha)
        .collect()
}

fn w_rows(grid: &Grid, f: &ScalarField, g: &ScalarField, which: WNorm, k: usize) -> Result<Vec<f64>> {
    let rad = w_radial(grid, which);
    let raw = w_rows_raw(grid, f, g, which, k)?;
    Ok(raw.iter().zip(&rad).map(|(a, b)| a * b).collect())
}

/// Row sums of a W inner product before the radial weight.
fn w_rows_raw(grid: &Grid, f: &ScalarField, g: &ScalarField, which: WNorm, k: usize) -> Result<Vec<f64>> {
    f.check_grid(grid)?;
    f.check_frame(Frame::YBar)?;
    g.check_frame(Frame::YBar)?;
    f.same_shape(g)?;
    let alpha = grid.alpha;
    let eta = crate::params::ETA;
    let rad = vec![1.0; grid.n_sigma];
    let same = std::ptr::eq(f, g);
    let mut owned_terms: Vec<(usize, usize, bool)> = Vec::new(); // (j, i, extra-block)
    let mut angs: Vec<Vec<f64>> = Vec::new();
    let tf;
    let tg;
    let mut tf2 = None;
    let mut tg2 = None;
    match which {
        WNorm::W1 | WNorm::W2 => {
            tf = derivative_table(grid, f, k, alpha, true)?;
            tg = if same { None } else { Some(derivative_table(grid, g, k, alpha, true)?) };
            angs.push(sin2b_pow(grid, 2.0 - eta));
            angs.push(sin2b_pow(grid, -eta));
            for j in 0..=k {
                for i in 0..=(k - j) {
                    owned_terms.push((j, i, false));
                }
            }
        }
        WNorm::W3 => {
            tf = derivative_table(grid, f, k, alpha, true)?;
            tg = if same { None } else { Some(derivative_table(grid, g, k, alpha, true)?) };
            angs.push(cos_pow(grid, 2.0 - eta));
            for j in 0..=k {
                for i in 0..=(k - j) {
                    owned_terms.push((j, i, false));
                }
            }
            if k >= 1 {
                let fb = partial_beta(grid, f)?;
                tf2 = Some(derivative_table(grid, &fb, k - 1, alpha, true)?);
                if !same {
                    let gb = partial_beta(grid, g)?;
                    tg2 = Some(derivative_table(grid, &gb, k - 1, alpha, true)?);
                }
                for j in 0..k {
                    for i in 0..(k - j) {
                        owned_terms.push((j, i, true));
                    }
                }
            }
        }
    }
    let tg_ref = tg.as_ref().unwrap_or(&tf);
    let tg2_ref = tg2.as_ref().or(tf2.as_ref());
    let terms: Vec<Term> = owned_terms
        .iter()
        .map(|&(j, i, extra)| {
            let ang: &[f64] = match which {
                WNorm::W3 => &angs[0],
                _ if i == 0 && j == k => &angs[0],
                _ => &angs[1],
            };
            if extra {
                Term { a: &tf2.as_ref().unwrap()[j][i], b: &tg2_ref.unwrap()[j][i], ang }
            } else {
                Term { a: &tf[j][i], b: &tg_ref[j][i], ang }
            }
        })
        .collect();
    Ok(row_totals(&terms, &rad, grid.n_beta))
}

pub fn w_inner(grid: &Grid, f: &ScalarField, g: &ScalarField, which: WNorm, k: usize) -> Result<f64> {
    Ok(par::pairwise_sum(&w_rows(grid, f, g, which, k)?))
}

pub fn w_norm(grid: &Grid, f: &ScalarField, which: WNorm, k: usize) -> Result<NormValue> {
    let rows = w_rows(grid, f, f, which, k)?;
    let sq = par::pairwise_sum(&rows);
    let decade = grid.alpha * std::f64::consts::LN_10;
    Ok(NormValue {
        value: sq.max(0.0).sqrt(),
        tail_fraction: tail_fraction(&rows, &grid.ybar_axis.nodes, decade),
    })
}

/// Multiplies a ybar-frame field by rho_bar^p pointwise.
pub fn times_rhobar_pow(grid: &Grid, f: &ScalarField, p: f64) -> ScalarField {
    let alpha = grid.alpha;
    let nodes = &grid.ybar_axis.nodes;
    f.map_indexed(|i, _, v| v * (p * nodes[i] / alpha).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub hk: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub x: f64,
    pub y: f64,
    pub e: f64,
    pub k: usize,
    /// Largest tail fraction among the component norms.
    pub tail: f64,
}

/// The Y-type bracket |(1/rho) d_b f|^2 + |(1/rho) D_rho f|^2 in one W norm.
pub fn y_bracket(grid: &Grid, f: &ScalarField, which: WNorm, k: usize) -> Result<f64> {
    let fb = partial_beta(grid, f)?;
    let fr = apply_derivative(grid, f, DerivOp::DRhobar)?;
    let a = w_norm(grid, &times_rhobar_pow(grid, &fb, -1.0), which, k)?.value;
    let b = w_norm(grid, &times_rhobar_pow(grid, &fr, -1.0), which, k)?.value;
    Ok(a * a + b * b)
}

/// W1 and W2 norms from one derivative table.
pub fn w12_norms(grid: &Grid, f: &ScalarField, k: usize) -> Result<(NormValue, NormValue)> {
    let raw = w_rows_raw(grid, f, f, WNorm::W1, k)?;
    let decade = grid.alpha * std::f64::consts::LN_10;
    let one = |which| {
        let rows: Vec<f64> = raw.iter().zip(&w_radial(grid, which)).map(|(a, b)| a * b).collect();
        NormValue {
            value: par::pairwise_sum(&rows).max(0.0).sqrt(),
            tail_fraction: tail_fraction(&rows, &grid.ybar_axis.nodes, decade),
        }
    };
    Ok((one(WNorm::W1), one(WNorm::W2)))
}

/// y_bracket in W1 and W2 together.
fn y_bracket12(grid: &Grid, f: &ScalarField, k: usize) -> Result<(f64, f64)> {
    let fb = times_rhobar_pow(grid, &partial_beta(grid, f)?, -1.0);
    let fr = times_rhobar_pow(grid, &apply_derivative(grid, f, DerivOp::DRhobar)?, -1.0);
    let (a1, a2) = w12_norms(grid, &fb, k)?;
    let (b1, b2) = w12_norms(grid, &fr, k)?;
    Ok((a1.value.powi(2) + b1.value.powi(2), a2.value.powi(2) + b2.value.powi(2)))
}

pub fn energy_xye(
    grid: &Grid,
    eps: &ScalarField,
    xi: &ScalarField,
    phi: &ScalarField,
    k: usize,
    c_embed: f64,
) -> Result<NormReport> {
    let hk = hk_norm(grid, eps, k)?;
    let (w1, w2) = w12_norms(grid, xi, k)?;
    let w3 = w_norm(grid, phi, WNorm::W3, k)?;
    let x = w1.value.powi(2) + w2.value.powi(2) + w3.value.powi(2);
    let (y1, y2) = y_bracket12(grid, xi, k)?;
    let y = y1 + y2 + y_bracket(grid, phi, WNorm::W3, k)?;
    let e = c_embed * grid.alpha.powi(1 - 2 * k as i32) * x + hk.value.powi(2);
    let tail = [hk.tail_fraction, w1.tail_fraction, w2.tail_fraction, w3.tail_fraction]
        .into_iter()
        .fold(0.0, f64::max);
    Ok(NormReport { hk: hk.value, w1: w1.value, w2: w2.value, w3: w3.value, x, y, e, k, tail })
}

/// Plain L2 norm over (sigma, beta) with the grid's quadrature weights.
pub fn l2_plain(grid: &Grid, f: &ScalarField) -> f64 {
    let ax = grid.axis(f.frame);
    let rows = par::map_collect(grid.n_sigma, |i| {
        f.row(i).iter().map(|v| v * v).sum::<f64>() * ax.weights[i] * grid.h_beta
    });
    par::pairwise_sum(&rows).sqrt()
}

/// Parity tags used for the evolved fields.
pub mod parity {
    use crate::field::{Parity, Sym};
    /// Vorticity profiles and stream functions vanish at both angular ends.
    pub const EPS: Parity = Parity::ODD;
    pub const PHI_STREAM: Parity = Parity::ODD;
    /// d_r theta: odd across the plane x3 = 0 and across the axis.
    pub const XI: Parity = Parity::ODD;
    /// d_3 theta: even at both ends.
    pub const PHI: Parity = Parity::EVEN;
    /// theta itself: odd in x3, even across the axis.
    pub const THETA: Parity = Parity::new(Sym::Odd, Sym::Even);
}
