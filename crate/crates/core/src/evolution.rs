//! Time stepping of (eps, xi, phi) with the modulation parameters.
//!
//! eps is advanced through the total vorticity profile W = F* + eps. The
//! explicit part uses Heun's method with sixth-order Kreiss-Oliger
//! dissipation; the xi/phi diffusion is backward Euler in an angular
//! eigenbasis. lam_rate = lambda_s/lambda + 1 is fixed each stage by
//! requiring d/ds L12(eps)(0) = 0.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::calculus::{
    d_sigma, energy_xye, hk_norm, l12, l2_plain, partial_beta, w_inner, WNorm,
};
use crate::elliptic::{decompose_with, velocity_pack, EllipticOperator, VelocityPack};
use crate::error::{LabError, Result};
use crate::field::{Frame, Parity, ScalarField, Sym};
use crate::grid::Grid;
use crate::linalg::{sym_tridiag_eigen, TridiagLu};
use crate::par;
use crate::params::Params;
use crate::profiles::{build_profile, f_star_residual, ProfilePack};
use crate::samples::{self, Kind};
use crate::stencil::{resample_rows, BetaOp, Outside, KO6};

pub const HISTORY_CAP: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationState {
    pub s: f64,
    pub ln_lambda: f64,
    pub ln_mu: f64,
    pub ln_l2: f64,
    /// Running integral of lam_rate.
    pub int_lam: f64,
    /// Physical time, the integral of lambda ds.
    pub t_phys: f64,
    /// lam_rate of the last completed step.
    pub lam_rate: f64,
}

impl ModulationState {
    pub fn initial(p: &Params) -> Self {
        ModulationState {
            s: 0.0,
            ln_lambda: p.lambda_0.ln(),
            ln_mu: p.mu_0.ln(),
            ln_l2: p.l2_0.ln(),
            int_lam: 0.0,
            t_phys: 0.0,
            lam_rate: 0.0,
        }
    }
    pub fn lambda(&self) -> f64 {
        self.ln_lambda.exp()
    }
    pub fn mu(&self) -> f64 {
        self.ln_mu.exp()
    }
    pub fn l2(&self) -> f64 {
        self.ln_l2.exp()
    }
    /// l1 = e^{-s}, never integrated.
    pub fn l1(&self) -> f64 {
        (-self.s).exp()
    }
}

/// Logarithmic rates of the modulation parameters for a given lam_rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub lam_rate: f64,
    pub dln_lambda: f64,
    /// mu_s / mu.
    pub dln_mu: f64,
    pub dln_l1: f64,
    pub dln_l2: f64,
    /// ln of (mu l2 / lambda^(1+delta))^(2/alpha) lambda.
    pub ln_prefactor: f64,
    /// prefactor / l2(0)^(2/alpha).
    pub prefactor_ratio: f64,
}

pub fn modulation_coeffs(m: &ModulationState, lam_rate: f64, p: &Params) -> Result<Rates> {
    let a = p.alpha;
    let d = p.delta;
    let ln_pref = (2.0 / a) * (m.ln_mu + m.ln_l2 - (1.0 + d) * m.ln_lambda) + m.ln_lambda;
    if !ln_pref.is_finite() || ln_pref.abs() > 700.0 {
        return Err(LabError::Overflow(format!("diffusion prefactor e^{ln_pref:.3e} out of range")));
    }
    let ln_ratio = ln_pref - (2.0 / a) * p.l2_0.ln();
    Ok(Rates {
        lam_rate,
        dln_lambda: lam_rate - 1.0,
        dln_mu: (2.0 + d) * lam_rate,
        dln_l1: -1.0,
        dln_l2: -(1.0 + d) + a / 2.0 - (1.0 + a / 2.0) * lam_rate,
        ln_prefactor: ln_pref,
        prefactor_ratio: ln_ratio.clamp(-700.0, 700.0).exp(),
    })
}

/// Switches used by tests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// Keep the F* residual as a drive; when off, eps = 0 is a fixed point.
    pub forcing: bool,
    /// Replace every velocity functional by zero.
    pub freeze_velocity: bool,
    pub lam_rate_override: Option<f64>,
    /// l1 xi(l2 y) in the eps equation.
    pub coupling: bool,
    pub diffusion: bool,
    /// Evaluate the per-term energy contributions (extra norm evaluations).
    pub ledger_terms: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            forcing: true,
            freeze_velocity: false,
            lam_rate_override: None,
            coupling: true,
            diffusion: true,
            ledger_terms: false,
        }
    }
}

/// One time-series row. The first fourteen fields are the CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s: f64,
    pub t_phys: f64,
    pub lambda: f64,
    pub mu: f64,
    pub l1: f64,
    pub l2: f64,
    pub lam_rate: f64,
    pub eps_hk: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub l12_drift: f64,
    pub compat_residual: f64,
    pub diffusion_prefactor_ratio: f64,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "s",
    "t_phys",
    "lambda",
    "mu",
    "l1",
    "l2",
    "lam_rate",
    "eps_hk",
    "X",
    "Y",
    "E",
    "l12_drift",
    "compat_residual",
    "diffusion_prefactor_ratio",
];

impl StepRecord {
    pub fn values(&self) -> [f64; 14] {
        [
            self.s,
            self.t_phys,
            self.lambda,
            self.mu,
            self.l1,
            self.l2,
            self.lam_rate,
            self.eps_hk,
            self.x,
            self.y,
            self.e,
            self.l12_drift,
            self.compat_residual,
            self.diffusion_prefactor_ratio,
        ]
    }
}

/// d/ds of X split by origin (first-stage values of the step).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTerms {
    pub s: f64,
    pub scaling: f64,
    pub transport: f64,
    pub diffusion: f64,
    /// 2 l1 <xi(l2 y), eps> in H^k.
    pub coupling: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub modulation: ModulationState,
    pub eps: ScalarField,
    pub xi: ScalarField,
    pub phi: ScalarField,
    pub phi_eps: ScalarField,
    pub forcing: ScalarField,
    pub history: VecDeque<StepRecord>,
    pub ledger: VecDeque<LedgerTerms>,
}

/// Backward-Euler diffusion in the ybar frame, one parity class.
#[derive(Debug, Clone)]
struct DiffusionBasis {
    nb: usize,
    /// eigenvectors of C^{-1/2} K C^{-1/2}, row-major, column = mode
    q: Vec<f64>,
    mu: Vec<f64>,
    csqrt: Vec<f64>,
}

impl DiffusionBasis {
    /// (1/cos) d_b(cos d_b f) [- f/cos^2 when `xi`], conservative second-order form.
    fn new(grid: &Grid, lo: Sym, xi: bool) -> DiffusionBasis {
        let nb = grid.n_beta;
        let h = grid.h_beta;
        let face = |j: isize| (j as f64 * h).cos(); // cos at beta_{j-1/2}
        let mut diag = vec![0.0; nb];
        let mut off = vec![0.0; nb - 1];
        for j in 0..nb {
            let up = face(j as isize + 1);
            let dn = face(j as isize);
            let mut d = -(up + dn) / (h * h);
            if j == 0 {
                // ghost f_{-1} = sign * f_0
                let s = lo.sign().unwrap_or(1.0);
                d += s * dn / (h * h);
            }
            diag[j] = d;
            if j + 1 < nb {
                off[j] = up / (h * h);
            }
        }
        // K is symmetric; M = C^{-1} K. Symmetric form C^{-1/2} K C^{-1/2}.
        let c = &grid.cos_b;
        let mut sd = vec![0.0; nb];
        let mut so = vec![0.0; nb - 1];
        for j in 0..nb {
            sd[j] = diag[j] / c[j] - if xi { 1.0 / (c[j] * c[j]) } else { 0.0 };
            if j + 1 < nb {
                so[j] = off[j] / (c[j] * c[j + 1]).sqrt();
            }
        }
        let (mu, q) = sym_tridiag_eigen(&sd, &so);
        DiffusionBasis { nb, q, mu, csqrt: c.iter().map(|x| x.sqrt()).collect() }
    }

    /// Solves (1 - dt P rho^-2 A) f_new = f with ln(dt P) = `ln_dtp`.
    fn implicit(&self, grid: &Grid, f: &ScalarField, ln_dtp: f64) -> Result<ScalarField> {
        let nb = self.nb;
        let ns = grid.n_sigma;
        let a = grid.alpha;
        let ax = &grid.ybar_axis;
        let h = ax.h;
        let mut hat = vec![0.0; f.data.len()];
        par::for_each_row(&mut hat, nb, |i, row| {
            let src = &f.data[i * nb..(i + 1) * nb];
            for j in 0..nb {
                let v = self.csqrt[j] * src[j];
                let qr = &self.q[j * nb..(j + 1) * nb];
                for m in 0..nb {
                    row[m] += qr[m] * v;
                }
            }
        });
        let inv_c: Vec<f64> = ax
            .nodes
            .iter()
            .map(|&sb| (2.0 * sb / a - ln_dtp).clamp(-700.0, 700.0).exp())
            .collect();
        let lo = a * a / (h * h) - a / (2.0 * h);
        let hi = a * a / (h * h) + a / (2.0 * h);
        let mut cols = vec![0.0; hat.len()];
        let failures: Vec<Option<LabError>> = {
            let mut errs = vec![None; nb];
            let chunks: Vec<(usize, Vec<f64>, Option<LabError>)> = par::map_collect(nb, |m| {
                let diag: Vec<f64> = inv_c.iter().map(|ic| ic + 2.0 * a * a / (h * h) - self.mu[m]).collect();
                let sub = vec![-lo; ns - 1];
                let sup = vec![-hi; ns - 1];
                let mut col: Vec<f64> = (0..ns).map(|i| hat[i * nb + m] * inv_c[i]).collect();
                match TridiagLu::factor(&sub, &diag, &sup) {
                    Ok(lu) => {
                        lu.solve_in_place(&mut col);
                        (m, col, None)
                    }
                    Err(e) => (m, col, Some(e)),
                }
            });
            for (m, col, e) in chunks {
                cols[m * ns..(m + 1) * ns].copy_from_slice(&col);
                errs[m] = e;
            }
            errs
        };
        if let Some(e) = failures.into_iter().flatten().next() {
            return Err(e);
        }
        let mut out = f.clone();
        par::for_each_row(&mut out.data, nb, |i, row| {
            for j in 0..nb {
                let qr = &self.q[j * nb..(j + 1) * nb];
                let mut s = 0.0;
                for m in 0..nb {
                    s += qr[m] * cols[m * ns + i];
                }
                row[j] = s / self.csqrt[j];
            }
        });
        if !out.is_finite() {
            return Err(LabError::Solver("implicit diffusion produced non-finite values".into()));
        }
        Ok(out)
    }
}

/// Sixth difference along sigma divided by h, zero within three nodes of an end.
fn ko_radial(data: &[f64], ns: usize, nb: usize, h: f64) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    par::for_each_row(&mut out, nb, |i, row| {
        if i < 3 || i + 3 >= ns {
            return;
        }
        for (k, c) in KO6.iter().enumerate() {
            let src = &data[(i + k - 3) * nb..(i + k - 2) * nb];
            for (o, s) in row.iter_mut().zip(src) {
                *o += c * s / h;
            }
        }
    });
    out
}

/// Immutable pieces shared by every step at fixed (params, grid).
pub struct Model {
    pub params: Params,
    pub grid: Grid,
    pub profile: ProfilePack,
    pub op: EllipticOperator,
    /// Stream function of F*.
    pub phi_f: ScalarField,
    /// F*-equation residual with the full velocity.
    pub forcing: ScalarField,
    /// Explicit eps terms at eps = 0, with and without velocity.
    a0_full: Vec<f64>,
    a0_frozen: Vec<f64>,
    pub opts: StepOptions,
    /// Velocity pack of Phi_{F*}.
    pub vel_f: VelocityPack,
    diff_xi: DiffusionBasis,
    diff_phi: DiffusionBasis,
    ko_odd: BetaOp,
    ko_even: BetaOp,
    l12_fstar0: f64,
    l12_b0: f64,
}

/// Explicit right-hand side of one stage.
#[derive(Debug, Clone)]
pub struct Rhs {
    pub d_eps: ScalarField,
    pub d_xi: ScalarField,
    pub d_phi: ScalarField,
    pub lam_rate: f64,
    pub rates: Rates,
    pub speed_beta: f64,
    pub speed_sigma: f64,
    pub speed_sigma_bar: f64,
    xi_scaling: Option<(ScalarField, ScalarField)>,
    xi_transport: Option<(ScalarField, ScalarField)>,
    coupled: Option<ScalarField>,
}

impl Model {
    pub fn new(params: &Params, opts: StepOptions) -> Result<Model> {
        params.validate()?;
        let grid = Grid::new(params)?;
        let profile = build_profile(params, &grid)?;
        let op = EllipticOperator::new(&grid, params)?;
        let phi_f = decompose_with(&grid, &op, &profile.f_star)?.phi;
        let (forcing, _) = f_star_residual(&grid, &profile, &phi_f, params)?;
        let vel_f = velocity_pack(&grid, &phi_f, params)?;
        let nb = grid.n_beta;
        let hb = grid.h_beta;
        let l12_fstar0 = l12(&grid, &profile.f_star, 0.0)?;
        let l12_b0 = l12(&grid, &profile.f_star.sub(&profile.f_star_dsigma), 0.0)?;
        let mut model = Model {
            a0_full: Vec::new(),
            a0_frozen: Vec::new(),
            diff_xi: DiffusionBasis::new(&grid, Sym::Odd, true),
            diff_phi: DiffusionBasis::new(&grid, Sym::Even, false),
            ko_odd: BetaOp::new(nb, hb, 1, &KO6, Sym::Odd, Sym::Odd)?,
            ko_even: BetaOp::new(nb, hb, 1, &KO6, Sym::Even, Sym::Even)?,
            params: params.clone(),
            grid,
            profile,
            op,
            phi_f,
            forcing,
            opts,
            vel_f,
            l12_fstar0,
            l12_b0,
        };
        let z = ScalarField::zeros(&model.grid, Frame::Y, Parity::ODD);
        model.a0_full = model.total_w(Some(&model.vel_f), &z, &z, &z).0;
        model.a0_frozen = model.total_w(None, &z, &z, &z).0;
        Ok(model)
    }

    fn solve_eps(&self, eps: &ScalarField) -> Result<ScalarField> {
        if self.opts.freeze_velocity || eps.max_abs() == 0.0 {
            return Ok(ScalarField::zeros(&self.grid, Frame::Y, Parity::ODD));
        }
        Ok(decompose_with(&self.grid, &self.op, eps)?.phi)
    }

    /// State from theta_0 on (rho_bar, beta) and eps_0; eps_0 is projected.
    pub fn init_from_theta(&self, theta0: &ScalarField, eps0: &ScalarField) -> Result<SimState> {
        let g = &self.grid;
        theta0.check_grid(g)?;
        eps0.check_grid(g)?;
        theta0.check_frame(Frame::YBar)?;
        eps0.check_frame(Frame::Y)?;
        if theta0.parity != crate::calculus::parity::THETA {
            return Err(LabError::Parity("theta_0 must be odd at beta = 0 and even at pi/2".into()));
        }
        if eps0.parity != Parity::ODD {
            return Err(LabError::Parity("eps_0 must be ODD".into()));
        }
        let (xi, phi) = gradient_profiles(g, theta0)?;
        let eps = self.project(eps0)?;
        let phi_eps = self.solve_eps(&eps)?;
        Ok(SimState {
            modulation: ModulationState::initial(&self.params),
            eps,
            xi,
            phi,
            phi_eps,
            forcing: self.forcing.clone(),
            history: VecDeque::new(),
            ledger: VecDeque::new(),
        })
    }

    /// Seeded initial data scaled so that E(0) = init_fraction * delta0 * alpha^3,
    /// split evenly between eps and the temperature gradient.
    pub fn initial_state(&self, seed: u64) -> Result<SimState> {
        let g = &self.grid;
        let p = &self.params;
        let mut rng = samples::rng(seed);
        let eps_raw = self.project(&samples::admissible_field(g, Frame::Y, Kind::Odd, &mut rng))?;
        let theta_raw = samples::admissible_field(g, Frame::YBar, Kind::Theta, &mut rng);
        let target = p.init_fraction * p.delta0 * p.alpha.powi(3);
        let k = p.k;
        let e_eps = hk_norm(g, &eps_raw, k)?.value.powi(2);
        let (xi_raw, phi_raw) = gradient_profiles(g, &theta_raw)?;
        let zero = ScalarField::zeros(g, Frame::Y, Parity::ODD);
        let rep = energy_xye(g, &zero, &xi_raw, &phi_raw, k, p.c_embed)?;
        let a_eps = if e_eps > 0.0 { (0.5 * target / e_eps).sqrt() } else { 0.0 };
        let a_th = if rep.e > 0.0 { (0.5 * target / rep.e).sqrt() } else { 0.0 };
        self.init_from_theta(&theta_raw.scale(a_th), &eps_raw.scale(a_eps))
    }

    /// Removes the F* component so that L12(eps)(0) = 0.
    pub fn project(&self, eps: &ScalarField) -> Result<ScalarField> {
        if self.l12_fstar0.abs() < 1e-300 {
            return Err(LabError::Constraint("F* has no L12 mass to project on".into()));
        }
        let c = l12(&self.grid, eps, 0.0)? / self.l12_fstar0;
        Ok(eps.axpy(-c, &self.profile.f_star))
    }

    /// Rows of a y-frame field resampled onto the ybar axis at ybar = l2 y.
    fn to_ybar(&self, f: &ScalarField, ln_l2: f64, parity: Parity) -> ScalarField {
        let g = &self.grid;
        let pos: Vec<f64> = g.ybar_axis.nodes.iter().map(|&sb| g.y_axis.position(sb - ln_l2)).collect();
        let data = resample_rows(&f.data, g.n_sigma, g.n_beta, &pos, Outside::Clamp);
        ScalarField { data, frame: Frame::YBar, parity, ..f.clone() }
    }

    /// xi(l2 y) sampled on the y axis; zero outside the ybar axis.
    pub fn coupling_field(&self, xi: &ScalarField, ln_l2: f64) -> ScalarField {
        let g = &self.grid;
        let pos: Vec<f64> = g.y_axis.nodes.iter().map(|&s| g.ybar_axis.position(s + ln_l2)).collect();
        let data = resample_rows(&xi.data, g.n_sigma, g.n_beta, &pos, Outside::Zero);
        ScalarField { data, frame: Frame::Y, parity: Parity::ODD, ..xi.clone() }
    }

    /// Total-W explicit terms -(W + (1+delta) DW) - transport, and W - DW.
    fn total_w(&self, vp: Option<&VelocityPack>, eps: &ScalarField, de: &ScalarField, be: &ScalarField) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let (a, d) = (self.params.alpha, self.params.delta);
        let prof = &self.profile;
        let n = self.grid.len();
        let mut a_f = vec![0.0; n];
        let mut b_f = vec![0.0; n];
        let mut speed_beta = 0.0f64;
        let mut speed_sigma = 0.0f64;
        for k in 0..n {
            let w = prof.f_star.data[k] + eps.data[k];
            let dw = prof.f_star_dsigma.data[k] + de.data[k];
            let bw = prof.f_star_dbeta.data[k] + be.data[k];
            let mut v = -(w + (1.0 + d) * dw);
            let mut cs = 1.0 + d;
            if let Some(vp) = vp {
                v -= vp.u.data[k] * bw + a * vp.v.data[k] * dw - vp.rcal.data[k] * w;
                speed_beta = speed_beta.max(vp.u.data[k].abs());
                cs += a * vp.v.data[k];
            }
            speed_sigma = speed_sigma.max(cs.abs());
            a_f[k] = v;
            b_f[k] = w - dw;
        }
        (a_f, b_f, speed_beta, speed_sigma)
    }

    pub fn rhs_all(&self, m: &ModulationState, eps: &ScalarField, xi: &ScalarField, phi: &ScalarField, phi_eps: &ScalarField) -> Result<Rhs> {
        self.rhs_inner(m, eps, xi, phi, phi_eps, false)
    }

    fn rhs_inner(
        &self,
        m: &ModulationState,
        eps: &ScalarField,
        xi: &ScalarField,
        phi: &ScalarField,
        phi_eps: &ScalarField,
        keep_parts: bool,
    ) -> Result<Rhs> {
        let g = &self.grid;
        let p = &self.params;
        let a = p.alpha;
        let d = p.delta;
        let n = g.len();
        let nb = g.n_beta;

        let frozen = self.opts.freeze_velocity;
        let vp = if frozen {
            None
        } else if phi_eps.max_abs() == 0.0 {
            Some(self.vel_f.clone())
        } else {
            Some(velocity_pack(g, &self.phi_f.add(phi_eps), p)?)
        };

        let de = d_sigma(g, eps);
        let be = partial_beta(g, eps)?;
        let (mut a_f, b_f, speed_beta, mut speed_sigma) = self.total_w(vp.as_ref(), eps, &de, &be);
        speed_sigma += m.lam_rate.abs();
        if !self.opts.forcing {
            // same loop at eps = 0, so the cancellation is exact for eps = 0
            let a0 = if frozen { &self.a0_frozen } else { &self.a0_full };
            a_f.iter_mut().zip(a0).for_each(|(x, r)| *x -= r);
        }
        let coupled = if self.opts.coupling {
            let c = self.coupling_field(xi, m.ln_l2);
            let l1 = m.l1();
            a_f.iter_mut().zip(&c.data).for_each(|(x, c)| *x += l1 * c);
            Some(c.scale(l1))
        } else {
            None
        };
        let ko = p.ko_sigma;
        if ko > 0.0 {
            let kb = self.ko_odd.apply(&eps.data, nb);
            let ks = ko_radial(&eps.data, g.n_sigma, nb, g.y_axis.h);
            for k in 0..n {
                a_f[k] += ko / 64.0 * (speed_beta * kb[k] + speed_sigma * ks[k]);
            }
        }
        let a_field = ScalarField { data: a_f, ..eps.clone() };
        let b_field = ScalarField { data: b_f, ..eps.clone() };
        let lam_rate = match self.opts.lam_rate_override {
            Some(v) => v,
            None => {
                let lb = l12(g, &b_field, 0.0)?;
                if lb.abs() < 1e-12 * self.l12_b0.abs().max(1e-300) {
                    return Err(LabError::Constraint(format!("L12(W - DW)(0) = {lb:.3e} is degenerate")));
                }
                -l12(g, &a_field, 0.0)? / lb
            }
        };
        let d_eps = a_field.axpy(lam_rate, &b_field);
        let rates = modulation_coeffs(m, lam_rate, p)?;

        // xi / phi explicit parts on the ybar axis
        let vpb = vp.as_ref().map(|vp| {
            let r = |f: &ScalarField| self.to_ybar(f, m.ln_l2, Parity::NONE);
            (r(&vp.u), r(&vp.v), r(&vp.lam1), r(&vp.lam2), r(&vp.lam3), r(&vp.lam4))
        });
        let dxi = d_sigma(g, xi);
        let dphi = d_sigma(g, phi);
        let bxi = partial_beta(g, xi)?;
        let bphi = partial_beta(g, phi)?;
        // coefficient of D in the scaling terms, and of the identity
        let c_d = -rates.dln_mu + lam_rate * (1.0 + d) - (1.0 + d + rates.dln_l2);
        let c_0 = 2.0 * lam_rate - (2.0 + rates.dln_l1);
        let mut sx = vec![0.0; n];
        let mut sp = vec![0.0; n];
        let mut tx = vec![0.0; n];
        let mut tp = vec![0.0; n];
        let mut sb_speed = c_d.abs();
        let mut beta_speed_bar = 0.0f64;
        for k in 0..n {
            sx[k] = c_0 * xi.data[k] + c_d * dxi.data[k];
            sp[k] = c_0 * phi.data[k] + c_d * dphi.data[k];
            if let Some((u, v, l1, l2, l3, l4)) = &vpb {
                tx[k] = -(u.data[k] * bxi.data[k] + a * v.data[k] * dxi.data[k] + l1.data[k] * xi.data[k] + l2.data[k] * phi.data[k]);
                tp[k] = -(u.data[k] * bphi.data[k] + a * v.data[k] * dphi.data[k] + l3.data[k] * xi.data[k] + l4.data[k] * phi.data[k]);
                sb_speed = sb_speed.max((c_d - a * v.data[k]).abs());
                beta_speed_bar = beta_speed_bar.max(u.data[k].abs());
            }
        }
        let mut d_xi = ScalarField { data: sx.iter().zip(&tx).map(|(a, b)| a + b).collect(), ..xi.clone() };
        let mut d_phi = ScalarField { data: sp.iter().zip(&tp).map(|(a, b)| a + b).collect(), ..phi.clone() };
        if ko > 0.0 {
            let hb = g.ybar_axis.h;
            for (f, out, op) in [(xi, &mut d_xi, &self.ko_odd), (phi, &mut d_phi, &self.ko_even)] {
                let kb = op.apply(&f.data, nb);
                let ks = ko_radial(&f.data, g.n_sigma, nb, hb);
                for k in 0..n {
                    out.data[k] += ko / 64.0 * (beta_speed_bar * kb[k] + sb_speed * ks[k]);
                }
            }
        }
        let (xi_scaling, xi_transport) = if keep_parts {
            (
                Some((ScalarField { data: sx, ..xi.clone() }, ScalarField { data: sp, ..phi.clone() })),
                Some((ScalarField { data: tx, ..xi.clone() }, ScalarField { data: tp, ..phi.clone() })),
            )
        } else {
            (None, None)
        };
        Ok(Rhs {
            d_eps,
            d_xi,
            d_phi,
            lam_rate,
            rates,
            speed_beta: speed_beta.max(beta_speed_bar),
            speed_sigma,
            speed_sigma_bar: sb_speed,
            xi_scaling,
            xi_transport,
            coupled: if keep_parts { coupled } else { None },
        })
    }

    fn check_cfl(&self, r: &Rhs, dt: f64) -> Result<()> {
        let g = &self.grid;
        let nums = [
            ("beta", r.speed_beta * dt / g.h_beta),
            ("sigma", r.speed_sigma * dt / g.y_axis.h),
            ("sigma_bar", r.speed_sigma_bar * dt / g.ybar_axis.h),
        ];
        for (name, c) in nums {
            if !(c <= self.params.cfl_max) {
                return Err(LabError::Cfl(format!(
                    "{name} Courant number {c:.3} exceeds {} (dt = {dt})",
                    self.params.cfl_max
                )));
            }
        }
        Ok(())
    }

    /// One IMEX step: Heun for the explicit part, backward Euler diffusion,
    /// projection, stream re-solve, history row.
    pub fn imex_step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        let m0 = state.modulation;
        let k1 = self.rhs_inner(&m0, &state.eps, &state.xi, &state.phi, &state.phi_eps, self.opts.ledger_terms)?;
        self.check_cfl(&k1, dt)?;
        let advance = |m: &ModulationState, r: &Rates, h: f64| ModulationState {
            s: m.s + h,
            ln_lambda: m.ln_lambda + h * r.dln_lambda,
            ln_mu: m.ln_mu + h * r.dln_mu,
            ln_l2: m.ln_l2 + h * r.dln_l2,
            ..*m
        };
        let m1 = advance(&m0, &k1.rates, dt);
        let eps1 = state.eps.axpy(dt, &k1.d_eps);
        let xi1 = state.xi.axpy(dt, &k1.d_xi);
        let phi1 = state.phi.axpy(dt, &k1.d_phi);
        let phi_eps1 = self.solve_eps(&eps1)?;
        let k2 = self.rhs_inner(&m1, &eps1, &xi1, &phi1, &phi_eps1, false)?;

        let half = 0.5 * dt;
        let mut m = m0;
        m.s = m0.s + dt;
        m.ln_lambda = m0.ln_lambda + half * (k1.rates.dln_lambda + k2.rates.dln_lambda);
        m.ln_mu = m0.ln_mu + half * (k1.rates.dln_mu + k2.rates.dln_mu);
        m.ln_l2 = m0.ln_l2 + half * (k1.rates.dln_l2 + k2.rates.dln_l2);
        let lr = 0.5 * (k1.lam_rate + k2.lam_rate);
        m.int_lam = m0.int_lam + dt * lr;
        m.lam_rate = lr;
        let x = m.ln_lambda - m0.ln_lambda;
        let growth = if x.abs() < 1e-12 { 1.0 + 0.5 * x } else { x.exp_m1() / x };
        m.t_phys = m0.t_phys + m0.lambda() * dt * growth;

        let avg = |f0: &ScalarField, a: &ScalarField, b: &ScalarField| {
            let mut out = f0.clone();
            for k in 0..out.data.len() {
                out.data[k] += half * (a.data[k] + b.data[k]);
            }
            out
        };
        let eps = avg(&state.eps, &k1.d_eps, &k2.d_eps);
        let xi_e = avg(&state.xi, &k1.d_xi, &k2.d_xi);
        let phi_e = avg(&state.phi, &k1.d_phi, &k2.d_phi);
        let (xi, phi) = if self.opts.diffusion {
            let rates = modulation_coeffs(&m, lr, &self.params)?;
            let ln_dtp = dt.ln() + rates.ln_prefactor;
            (self.diff_xi.implicit(&self.grid, &xi_e, ln_dtp)?, self.diff_phi.implicit(&self.grid, &phi_e, ln_dtp)?)
        } else {
            (xi_e.clone(), phi_e.clone())
        };
        let eps = self.project(&eps)?;
        let phi_eps = self.solve_eps(&eps)?;
        let mut next = SimState {
            modulation: m,
            eps,
            xi,
            phi,
            phi_eps,
            forcing: state.forcing.clone(),
            history: state.history.clone(),
            ledger: state.ledger.clone(),
        };
        let rec = self.record(&next)?;
        next.history.push_back(rec);
        if next.history.len() > HISTORY_CAP {
            next.history.pop_front();
        }
        if self.opts.ledger_terms {
            let terms = self.ledger_terms(state, &k1, &xi_e, &phi_e, &next, dt)?;
            next.ledger.push_back(terms);
            if next.ledger.len() > HISTORY_CAP {
                next.ledger.pop_front();
            }
        }
        let bound = 1e-12 * (1.0 + l2_plain(&self.grid, &next.eps));
        if rec.l12_drift > 1e3 * bound {
            return Err(LabError::Constraint(format!(
                "L12(eps)(0) = {:.3e} after projection",
                rec.l12_drift
            )));
        }
        Ok(next)
    }

    fn ledger_terms(&self, prev: &SimState, k1: &Rhs, xi_e: &ScalarField, phi_e: &ScalarField, next: &SimState, dt: f64) -> Result<LedgerTerms> {
        let g = &self.grid;
        let k = self.params.k;
        let x_form = |a: &ScalarField, b: &ScalarField| -> Result<f64> {
            Ok(2.0
                * (w_inner(g, a, &prev.xi, WNorm::W1, k)?
                    + w_inner(g, a, &prev.xi, WNorm::W2, k)?
                    + w_inner(g, b, &prev.phi, WNorm::W3, k)?))
        };
        let (sx, sp) = k1.xi_scaling.as_ref().expect("scaling parts kept");
        let (tx, tp) = k1.xi_transport.as_ref().expect("transport parts kept");
        let dx = next.xi.sub(xi_e).scale(1.0 / dt);
        let dp = next.phi.sub(phi_e).scale(1.0 / dt);
        let coupling = match &k1.coupled {
            Some(c) => 2.0 * crate::calculus::hk_inner(g, c, &prev.eps, k)?,
            None => 0.0,
        };
        Ok(LedgerTerms {
            s: prev.modulation.s,
            scaling: x_form(sx, sp)?,
            transport: x_form(tx, tp)?,
            diffusion: x_form(&dx, &dp)?,
            coupling,
        })
    }

    pub fn record(&self, st: &SimState) -> Result<StepRecord> {
        let g = &self.grid;
        let p = &self.params;
        let m = &st.modulation;
        let rep = energy_xye(g, &st.eps, &st.xi, &st.phi, p.k, p.c_embed)?;
        let rates = modulation_coeffs(m, m.lam_rate, p)?;
        Ok(StepRecord {
            s: m.s,
            t_phys: m.t_phys,
            lambda: m.lambda(),
            mu: m.mu(),
            l1: m.l1(),
            l2: m.l2(),
            lam_rate: m.lam_rate,
            eps_hk: rep.hk,
            x: rep.x,
            y: rep.y,
            e: rep.e,
            l12_drift: l12(g, &st.eps, 0.0)?.abs(),
            compat_residual: compatibility_residual(g, &st.xi, &st.phi)?,
            diffusion_prefactor_ratio: rates.prefactor_ratio,
        })
    }

    /// Steps until s reaches `s_end` (the last step is shortened to land on it).
    pub fn run_to<F>(&self, mut state: SimState, s_end: f64, mut on_step: F) -> Result<SimState>
    where
        F: FnMut(&SimState) -> Result<()>,
    {
        let dt = self.params.dt;
        while state.modulation.s < s_end - 1e-12 * dt {
            let h = dt.min(s_end - state.modulation.s);
            state = self.imex_step(&state, h)?;
            on_step(&state)?;
        }
        Ok(state)
    }
}

/// (xi, phi) = (d_r theta, d_3 theta) profiles for theta on (rho_bar, beta),
/// up to the common 1/rho_bar factor which is applied here.
pub fn gradient_profiles(grid: &Grid, theta: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    theta.check_frame(Frame::YBar)?;
    let a = grid.alpha;
    let ts = d_sigma(grid, theta);
    let tb = partial_beta(grid, theta)?;
    let nb = grid.n_beta;
    let mut xi = ScalarField::zeros(grid, Frame::YBar, Parity::ODD);
    let mut phi = ScalarField::zeros(grid, Frame::YBar, Parity::EVEN);
    for i in 0..grid.n_sigma {
        let inv_rho = (-grid.ybar_axis.nodes[i] / a).exp();
        for j in 0..nb {
            let k = i * nb + j;
            let (s, c) = (grid.sin_b[j], grid.cos_b[j]);
            let dr = a * ts.data[k];
            xi.data[k] = inv_rho * (c * dr - s * tb.data[k]);
            phi.data[k] = inv_rho * (s * dr + c * tb.data[k]);
        }
    }
    Ok((xi, phi))
}

/// L2 norm of sin(b) a D xi + cos(b) d_b xi - cos(b) a D phi + sin(b) d_b phi.
pub fn compatibility_residual(grid: &Grid, xi: &ScalarField, phi: &ScalarField) -> Result<f64> {
    xi.check_frame(Frame::YBar)?;
    phi.check_frame(Frame::YBar)?;
    let a = grid.alpha;
    let dx = d_sigma(grid, xi);
    let dp = d_sigma(grid, phi);
    let bx = partial_beta(grid, xi)?;
    let bp = partial_beta(grid, phi)?;
    let nb = grid.n_beta;
    let r = xi.map_indexed(|i, j, _| {
        let k = i * nb + j;
        let (s, c) = (grid.sin_b[j], grid.cos_b[j]);
        s * a * dx.data[k] + c * bx.data[k] - c * a * dp.data[k] + s * bp.data[k]
    });
    Ok(l2_plain(grid, &r))
}

/// Physical fields recovered from a state.
#[derive(Debug, Clone)]
pub struct Physical {
    /// omega = W / lambda on nodes ln R = sigma + omega_ln_shift.
    pub omega: ScalarField,
    pub omega_ln_shift: f64,
    /// (l1 / lambda^2) (xi, phi) on nodes ln R = sigma_bar - ln l2 + theta_ln_shift.
    pub theta_r: ScalarField,
    pub theta_3: ScalarField,
    pub theta_ln_shift: f64,
    pub t_phys: f64,
}

pub fn reconstruct_physical(model: &Model, st: &SimState) -> Physical {
    let m = &st.modulation;
    let lam = m.lambda();
    let d = model.params.delta;
    let shift = (1.0 + d) * m.ln_lambda - m.ln_mu;
    let omega = model.profile.f_star.add(&st.eps).scale(1.0 / lam);
    let f = m.l1() / (lam * lam);
    Physical {
        omega,
        omega_ln_shift: shift,
        theta_r: st.xi.scale(f),
        theta_3: st.phi.scale(f),
        theta_ln_shift: shift - m.ln_l2,
        t_phys: m.t_phys,
    }
}
