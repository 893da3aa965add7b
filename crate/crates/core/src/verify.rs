//! Property battery: Hardy inequalities, an L-infinity embedding, Laplacian
//! coercivity, the linearized operator around F*, and the energy ledger.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::calculus::{d_sigma, hk_inner, hk_norm, laplace_tilde, partial_beta, times_rhobar_pow, w_inner, y_bracket, WNorm};
use crate::elliptic::velocity_pack;
use crate::error::{LabError, Result};
use crate::evolution::{LedgerTerms, Model, StepOptions, StepRecord};
use crate::field::{Frame, ScalarField};
use crate::grid::{Grid, RadialAxis};
use crate::par;
use crate::params::{Params, ETA};
use crate::samples::{self, Kind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    /// Hard checks decide the exit status; soft ones only report.
    pub hard: bool,
    pub measured_ratio: f64,
    pub samples: usize,
    pub worst_case: String,
    pub details: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(name: &str, hard: bool) -> Self {
        CheckReport {
            name: name.into(),
            pass: true,
            hard,
            measured_ratio: 0.0,
            samples: 0,
            worst_case: String::new(),
            details: BTreeMap::new(),
        }
    }
}

const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn gl8<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    GL8_X.iter().zip(&GL8_W).map(|(x, w)| w * g(c + r * x)).sum::<f64>() * r
}

/// int_0^h g, with g(x) ~ c x^p at 0: dyadic panels plus the power-law remainder.
fn graded<F: Fn(f64) -> f64>(g: &F, h: f64, p: f64) -> f64 {
    let mut total = 0.0;
    let mut hi = h;
    for _ in 0..64 {
        let lo = 0.5 * hi;
        total += gl8(g, lo, hi);
        hi = lo;
    }
    let lead = g(hi) / hi.powf(p);
    total + lead * hi.powf(p + 1.0) / (p + 1.0)
}

/// Angle data evaluated accurately near either end of (0, pi/2).
#[derive(Debug, Clone, Copy)]
pub struct Trig {
    pub b: f64,
    /// pi/2 - b.
    pub bc: f64,
    pub sb: f64,
    pub cb: f64,
    pub s2: f64,
    pub c2: f64,
}

impl Trig {
    pub fn at(b: f64) -> Trig {
        let (sb, cb) = b.sin_cos();
        let (s2, c2) = (2.0 * b).sin_cos();
        Trig { b, bc: FRAC_PI_2 - b, sb, cb, s2, c2 }
    }
    /// The angle pi/2 - x, built from x so nothing cancels near pi/2.
    pub fn reflected(x: f64) -> Trig {
        let (sx, cx) = x.sin_cos();
        let (s2, c2) = (2.0 * x).sin_cos();
        Trig { b: FRAC_PI_2 - x, bc: x, sb: cx, cb: sx, s2, c2: -c2 }
    }
}

/// int_0^{pi/2} g over n cells; the end cells are graded toward 0 and pi/2
/// with the given endpoint exponents.
pub fn angular_integral<F: Fn(&Trig) -> f64 + Sync>(g: F, n: usize, p_lo: f64, p_hi: f64) -> f64 {
    let h = FRAC_PI_2 / n as f64;
    let cells = par::map_collect(n, |j| {
        if j == 0 {
            graded(&|x: f64| g(&Trig::at(x)), h, p_lo)
        } else if j == n - 1 {
            graded(&|x: f64| g(&Trig::reflected(x)), h, p_hi)
        } else if 2 * j < n {
            gl8(&|x: f64| g(&Trig::at(x)), j as f64 * h, (j + 1) as f64 * h)
        } else {
            gl8(&|x: f64| g(&Trig::reflected(x)), (n - 1 - j) as f64 * h, (n - j) as f64 * h)
        }
    });
    par::pairwise_sum(&cells)
}

fn poly_d(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, &a)| acc * x + i as f64 * a)
}

type Sample = Box<dyn Fn(&Trig) -> (f64, f64) + Sync>;

/// f = sin(2b) Q(cos 2b) and its derivative.
fn odd_sample(c: Vec<f64>) -> Sample {
    Box::new(move |t: &Trig| {
        let q = samples::poly(&c, t.c2);
        let dq = poly_d(&c, t.c2);
        (t.s2 * q, 2.0 * t.c2 * q - 2.0 * t.s2 * t.s2 * dq)
    })
}

/// f = Q1(cos 2b) + sin(b) Q2(cos 2b), no vanishing imposed.
fn free_sample(c1: Vec<f64>, c2: Vec<f64>) -> Sample {
    Box::new(move |t: &Trig| {
        let q1 = samples::poly(&c1, t.c2);
        let q2 = samples::poly(&c2, t.c2);
        let f = q1 + t.sb * q2;
        let df = -2.0 * t.s2 * poly_d(&c1, t.c2) + t.cb * q2 - 2.0 * t.sb * t.s2 * poly_d(&c2, t.c2);
        (f, df)
    })
}

fn random_coeffs(rng: &mut samples::SampleRng) -> Vec<f64> {
    let mut c = samples::coeffs(rng, 4);
    c[3] = if c[3] >= 0.0 { 0.5 + c[3] } else { c[3] - 0.5 };
    c
}

fn eta_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = samples::rng(seed);
    let mut out: Vec<Sample> = vec![
        Box::new(|t: &Trig| (t.s2, 2.0 * t.c2)),
        Box::new(|t: &Trig| {
            let p = t.b * t.bc;
            (t.s2 * p, 2.0 * t.c2 * p + t.s2 * (t.bc - t.b))
        }),
    ];
    while out.len() < n {
        out.push(odd_sample(random_coeffs(&mut rng)));
    }
    out.truncate(n);
    out
}

fn cos_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = samples::rng(seed);
    let mut out: Vec<Sample> = vec![
        Box::new(|_t: &Trig| (1.0, 0.0)),
        Box::new(|t: &Trig| (t.cb, -t.sb)),
    ];
    while out.len() < n {
        let c1 = random_coeffs(&mut rng);
        let c2 = random_coeffs(&mut rng);
        out.push(free_sample(c1, c2));
    }
    out.truncate(n);
    out
}

/// (LHS, RHS) of the sin(2b)-weighted Hardy inequality for one sample.
pub fn hardy_eta_sides<F: Fn(&Trig) -> (f64, f64) + Sync>(f: F, n_beta: usize) -> (f64, f64) {
    let eta = ETA;
    let lhs = angular_integral(|t| f(t).0.powi(2) / t.s2.powf(eta + 2.0), n_beta, -eta, -eta);
    let rhs = angular_integral(|t| f(t).1.powi(2) / t.s2.powf(eta), n_beta, -eta, -eta)
        / (1.0 + eta).powi(2);
    (lhs, rhs)
}

/// (LHS, RHS) of the cos-weighted Hardy inequality for one sample.
pub fn hardy_cos_sides<F: Fn(&Trig) -> (f64, f64) + Sync>(f: F, n_beta: usize) -> (f64, f64) {
    let eta = ETA;
    let lhs = angular_integral(|t| f(t).0.powi(2) * t.cb.powf(-eta), n_beta, 0.0, -eta);
    let d = angular_integral(|t| f(t).1.powi(2) * t.cb.powf(2.0 - eta), n_beta, 0.0, 2.0 - eta);
    let z = angular_integral(|t| f(t).0.powi(2) * t.cb.powf(2.0 - eta), n_beta, 0.0, 2.0 - eta);
    let rhs = 4.0 / (1.0 - eta).powi(2) * d + (2.0 / (1.0 - eta) + 1.0) * z;
    (lhs, rhs)
}

fn hardy_report(name: &str, sides: Vec<(f64, f64)>, scale: f64) -> CheckReport {
    let mut rep = CheckReport::new(name, true);
    rep.samples = sides.len();
    let mut worst = (0usize, 0.0f64);
    for (i, &(l, r)) in sides.iter().enumerate() {
        let ok = l.is_finite() && r.is_finite() && l <= r * (1.0 + 1e-8);
        if !ok {
            rep.pass = false;
        }
        let ratio = if r > 0.0 { l / r } else if l == 0.0 { 0.0 } else { f64::INFINITY };
        if ratio > worst.1 || !ok {
            worst = (i, ratio);
        }
    }
    rep.measured_ratio = worst.1 * scale;
    rep.worst_case = format!("sample {} with LHS/RHS = {:.6}", worst.0, worst.1);
    rep.details.insert("max_lhs_over_rhs".into(), worst.1);
    rep
}

/// Seeded suite of the sin(2b) Hardy inequality; measured_ratio is the
/// largest LHS/RHS times (1 + eta)^2.
pub fn check_hardy_eta(n_samples: usize, n_beta: usize, seed: u64) -> CheckReport {
    let s = eta_samples(n_samples, seed);
    let sides = par::map_collect(s.len(), |i| hardy_eta_sides(&s[i], n_beta));
    hardy_report("hardy_eta", sides, (1.0 + ETA).powi(2))
}

pub fn check_hardy_cos(n_samples: usize, n_beta: usize, seed: u64) -> CheckReport {
    let s = cos_samples(n_samples, seed);
    let sides = par::map_collect(s.len(), |i| hardy_cos_sides(&s[i], n_beta));
    hardy_report("hardy_cos", sides, 1.0)
}

/// sup f^2 / int (f^2 + (D f)^2) dt for f(t) = P(t) e^{-t^2} on n nodes of
/// [-10, 10]; D is the grid derivative, the sup is refined by a parabola.
pub fn linf_constant(coeffs: &[f64], n: usize) -> Result<f64> {
    let ax = RadialAxis::new(n, -10.0, 10.0)?;
    let f: Vec<f64> = ax.nodes.iter().map(|&t| samples::poly(coeffs, t) * (-t * t).exp()).collect();
    let df = ax.d1.apply_1d(&f);
    let integrand: Vec<f64> = f.iter().zip(&df).zip(&ax.weights).map(|((a, b), w)| (a * a + b * b) * w).collect();
    let total = par::pairwise_sum(&integrand);
    let (imax, _) = f
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let mut sup = f[imax].abs();
    if imax > 0 && imax + 1 < n {
        let (a, b, c) = (f[imax - 1].abs(), f[imax].abs(), f[imax + 1].abs());
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            sup = b - 0.125 * (c - a).powi(2) / den;
        }
    }
    if total <= 0.0 {
        return Ok(0.0);
    }
    Ok(sup * sup / total)
}

/// Estimated constant of the one-dimensional L-infinity bound at two
/// resolutions, plus sqrt(alpha) max|g| / |g|_{H^2} over random fields.
pub fn check_linf(n_samples: usize, n: usize, grid: &Grid, seed: u64) -> Result<CheckReport> {
    let mut rng = samples::rng(seed);
    let mut coeffs = vec![vec![1.0]];
    while coeffs.len() < n_samples {
        coeffs.push(random_coeffs(&mut rng));
    }
    let mut c_n = 0.0f64;
    let mut c_2n = 0.0f64;
    for c in &coeffs {
        c_n = c_n.max(linf_constant(c, n)?);
        c_2n = c_2n.max(linf_constant(c, 2 * n)?);
    }
    let mut emb = 0.0f64;
    let mut grng = samples::rng(seed ^ 0x5eed);
    for _ in 0..n_samples {
        let g = samples::admissible_field(grid, Frame::Y, Kind::Odd, &mut grng);
        let h2 = hk_norm(grid, &g, 2)?.value;
        if h2 > 0.0 {
            emb = emb.max(grid.alpha.sqrt() * g.max_abs() / h2);
        }
    }
    let change = (c_2n - c_n).abs() / c_2n.max(1e-300);
    let mut rep = CheckReport::new("linf_embedding", true);
    rep.samples = coeffs.len();
    rep.measured_ratio = c_2n;
    rep.pass = c_n.is_finite() && c_2n.is_finite() && c_2n > 0.0 && change < 0.01 && emb.is_finite();
    rep.worst_case = format!("C({n}) = {c_n:.6}, C({}) = {c_2n:.6}", 2 * n);
    rep.details.insert("c_coarse".into(), c_n);
    rep.details.insert("c_fine".into(), c_2n);
    rep.details.insert("relative_change".into(), change);
    rep.details.insert("h2_embedding_ratio".into(), emb);
    Ok(rep)
}

/// The three quadratic forms of the Laplacian in W1, W2 (on xi) and W3 (on phi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceForms {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Matching Y-type brackets.
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
}

pub fn laplace_forms(grid: &Grid, xi: &ScalarField, phi: &ScalarField, k: usize) -> Result<LaplaceForms> {
    let a = grid.alpha;
    let nb = grid.n_beta;
    let lx = laplace_tilde(grid, xi, a)?;
    let lx = lx.map_indexed(|i, j, v| v - xi.data[i * nb + j] / (grid.cos_b[j] * grid.cos_b[j]));
    let lx = times_rhobar_pow(grid, &lx, -2.0);
    let lp = times_rhobar_pow(grid, &laplace_tilde(grid, phi, a)?, -2.0);
    Ok(LaplaceForms {
        w1: w_inner(grid, &lx, xi, WNorm::W1, k)?,
        w2: w_inner(grid, &lx, xi, WNorm::W2, k)?,
        w3: w_inner(grid, &lp, phi, WNorm::W3, k)?,
        y1: y_bracket(grid, xi, WNorm::W1, k)?,
        y2: y_bracket(grid, xi, WNorm::W2, k)?,
        y3: y_bracket(grid, phi, WNorm::W3, k)?,
    })
}

/// All three forms strictly negative on seeded samples; measured_ratio is the
/// smallest -form / bracket.
pub fn check_laplace_coercivity(grid: &Grid, n_samples: usize, k: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = samples::rng(seed);
    let pairs: Vec<(ScalarField, ScalarField)> = (0..n_samples)
        .map(|_| {
            let xi = samples::admissible_field(grid, Frame::YBar, Kind::Odd, &mut rng);
            let phi = samples::admissible_field(grid, Frame::YBar, Kind::Even, &mut rng);
            (xi, phi)
        })
        .collect();
    let mut rep = CheckReport::new(&format!("laplace_coercivity_k{k}"), true);
    rep.samples = n_samples;
    let mut c_min = f64::INFINITY;
    let mut worst = String::new();
    let mut max_form = f64::NEG_INFINITY;
    for (i, (xi, phi)) in pairs.iter().enumerate() {
        let f = laplace_forms(grid, xi, phi, k)?;
        for (name, form, br) in [("W1", f.w1, f.y1), ("W2", f.w2, f.y2), ("W3", f.w3, f.y3)] {
            max_form = max_form.max(form);
            if !(form < 0.0) {
                rep.pass = false;
                worst = format!("sample {i}, {name} form = {form:.3e}");
            }
            if br > 0.0 {
                let c = -form / br;
                if c < c_min {
                    c_min = c;
                    if rep.pass {
                        worst = format!("sample {i}, {name}: C = {c:.4e}");
                    }
                }
            }
        }
    }
    if !(c_min > 0.0) {
        rep.pass = false;
    }
    rep.measured_ratio = c_min;
    rep.worst_case = worst;
    rep.details.insert("largest_form".into(), max_form);
    rep.details.insert("k".into(), k as f64);
    Ok(rep)
}

/// The linearization of the profile operator at F* applied to eps.
pub fn assemble_mf(model: &Model, eps: &ScalarField) -> Result<ScalarField> {
    let g = &model.grid;
    let p = &model.params;
    eps.check_frame(Frame::Y)?;
    let phi_e = if eps.max_abs() == 0.0 {
        ScalarField::zeros(g, Frame::Y, crate::field::Parity::ODD)
    } else {
        crate::elliptic::decompose_with(g, &model.op, eps)?.phi
    };
    let ve = velocity_pack(g, &phi_e, p)?;
    let vf = &model.vel_f;
    let de = d_sigma(g, eps);
    let be = partial_beta(g, eps)?;
    let pf = &model.profile;
    let (a, d) = (p.alpha, p.delta);
    let mut out = eps.clone();
    for k in 0..out.data.len() {
        out.data[k] = eps.data[k] + (1.0 + d) * de.data[k]
            + vf.u.data[k] * be.data[k]
            + vf.v.data[k] * a * de.data[k]
            + ve.u.data[k] * pf.f_star_dbeta.data[k]
            + ve.v.data[k] * a * pf.f_star_dsigma.data[k]
            - vf.rcal.data[k] * eps.data[k]
            - ve.rcal.data[k] * pf.f_star.data[k];
    }
    Ok(out)
}

/// min over projected samples of <M_F eps, eps>_{H^k} / |eps|^2 at each alpha.
/// Reported only: coercivity is not expected at reachable alpha.
pub fn mf_coercivity_sample(alphas: &[f64], n_samples: usize, base: &Params, seed: u64) -> Result<CheckReport> {
    let mut rep = CheckReport::new("mf_coercivity", false);
    let mut mins = Vec::new();
    for &alpha in alphas {
        let mut p = base.clone();
        p.set_alpha(alpha);
        let model = Model::new(&p, StepOptions::default())?;
        let mut rng = samples::rng(seed);
        let mut m = f64::INFINITY;
        for _ in 0..n_samples {
            let e = model.project(&samples::admissible_field(&model.grid, Frame::Y, Kind::Odd, &mut rng))?;
            let n2 = hk_norm(&model.grid, &e, p.k)?.value.powi(2);
            if n2 == 0.0 {
                continue;
            }
            let mf = assemble_mf(&model, &e)?;
            m = m.min(hk_inner(&model.grid, &mf, &e, p.k)? / n2);
        }
        rep.details.insert(format!("min_ratio_alpha_{alpha}"), m);
        mins.push((alpha, m));
    }
    rep.samples = n_samples * alphas.len();
    let smallest = mins.iter().cloned().fold((f64::INFINITY, 0.0), |acc, x| if x.0 < acc.0 { x } else { acc });
    rep.measured_ratio = smallest.1;
    rep.pass = smallest.1 > 0.0;
    rep.worst_case = if rep.pass {
        format!("positive at alpha = {}", smallest.0)
    } else {
        format!("not coercive at alpha = {} (ratio {:.3e}); outside the reachable regime", smallest.0, smallest.1)
    };
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub rows: usize,
    pub de_ds_max: f64,
    pub de_ds_mean: f64,
    pub dx_ds_max: f64,
    pub dx_ds_mean: f64,
    /// Fitted rate of E ~ e^{-kappa s}, present when E decreases throughout.
    pub kappa_hat: Option<f64>,
    /// int (|mu_s/mu| + |lam_rate|) ds.
    pub modulation_integral: f64,
    pub mean_scaling: f64,
    pub mean_transport: f64,
    pub mean_diffusion: f64,
    pub mean_coupling: f64,
}

fn central_diff(s: &[f64], v: &[f64]) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 { (0, 1) } else if i == n - 1 { (n - 2, n - 1) } else { (i - 1, i + 1) };
            let ds = s[b] - s[a];
            if ds == 0.0 { 0.0 } else { (v[b] - v[a]) / ds }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() { 0.0 } else { par::pairwise_sum(v) / v.len() as f64 }
}

pub fn energy_ledger(history: &[StepRecord], terms: &[LedgerTerms]) -> Result<LedgerReport> {
    if history.len() < 3 {
        return Err(LabError::Insufficient(format!("energy ledger needs >= 3 rows, got {}", history.len())));
    }
    let s: Vec<f64> = history.iter().map(|r| r.s).collect();
    let e: Vec<f64> = history.iter().map(|r| r.e).collect();
    let x: Vec<f64> = history.iter().map(|r| r.x).collect();
    let de = central_diff(&s, &e);
    let dx = central_diff(&s, &x);
    let decreasing = e.windows(2).all(|w| w[1] < w[0]) && e.iter().all(|&v| v > 0.0);
    let kappa_hat = decreasing.then(|| {
        let ln: Vec<f64> = e.iter().map(|v| v.ln()).collect();
        let (ms, ml) = (mean(&s), mean(&ln));
        let num: Vec<f64> = s.iter().zip(&ln).map(|(a, b)| (a - ms) * (b - ml)).collect();
        let den: Vec<f64> = s.iter().map(|a| (a - ms).powi(2)).collect();
        -par::pairwise_sum(&num) / par::pairwise_sum(&den)
    });
    let modint: Vec<f64> = history
        .windows(2)
        .map(|w| {
            let ds = w[1].s - w[0].s;
            (w[1].mu.ln() - w[0].mu.ln()).abs() + 0.5 * (w[0].lam_rate.abs() + w[1].lam_rate.abs()) * ds
        })
        .collect();
    let col = |f: fn(&LedgerTerms) -> f64| mean(&terms.iter().map(f).collect::<Vec<_>>());
    Ok(LedgerReport {
        rows: history.len(),
        de_ds_max: de.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        de_ds_mean: mean(&de),
        dx_ds_max: dx.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        dx_ds_mean: mean(&dx),
        kappa_hat,
        modulation_integral: par::pairwise_sum(&modint),
        mean_scaling: col(|t| t.scaling),
        mean_transport: col(|t| t.transport),
        mean_diffusion: col(|t| t.diffusion),
        mean_coupling: col(|t| t.coupling),
    })
}

/// Settings of the default battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub seed: u64,
    pub hardy_samples: usize,
    pub hardy_n_beta: usize,
    pub linf_samples: usize,
    pub linf_n: usize,
    pub coercivity_samples: usize,
    pub coercivity_ks: Vec<usize>,
    pub mf_alphas: Vec<f64>,
    pub mf_samples: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            seed: 0,
            hardy_samples: 50,
            hardy_n_beta: 512,
            linf_samples: 50,
            linf_n: 128,
            coercivity_samples: 20,
            coercivity_ks: vec![0, 1],
            mf_alphas: vec![0.2, 0.1, 0.05],
            mf_samples: 5,
        }
    }
}

/// Runs every check on the grid described by `params`.
pub fn run_battery(params: &Params, cfg: &BatteryConfig) -> Result<Vec<CheckReport>> {
    let grid = Grid::new(params)?;
    let mut out = vec![
        check_hardy_eta(cfg.hardy_samples, cfg.hardy_n_beta, cfg.seed),
        check_hardy_cos(cfg.hardy_samples, cfg.hardy_n_beta, cfg.seed),
        check_linf(cfg.linf_samples, cfg.linf_n, &grid, cfg.seed)?,
    ];
    for &k in &cfg.coercivity_ks {
        out.push(check_laplace_coercivity(&grid, cfg.coercivity_samples, k, cfg.seed)?);
    }
    if !cfg.mf_alphas.is_empty() && cfg.mf_samples > 0 {
        out.push(mf_coercivity_sample(&cfg.mf_alphas, cfg.mf_samples, params, cfg.seed)?);
    }
    Ok(out)
}
