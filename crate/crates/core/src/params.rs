//! Scalar configuration shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Angular weight exponent, fixed.
pub const ETA: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub k: usize,
    pub n_beta: usize,
    pub n_sigma: usize,
    /// Truncation of sigma = ln y for y-frame fields.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Truncation of ln(rho_bar) for ybar-frame fields (sigma_bar = alpha * ln rho_bar).
    pub lnrho_min: f64,
    pub lnrho_max: f64,
    pub l2_0: f64,
    pub lambda_0: f64,
    pub mu_0: f64,
    pub dt: f64,
    pub s_end: f64,
    pub tol_linear: f64,
    pub tol_quad: f64,
    pub c_embed: f64,
    /// Initial-data scale: the run starts with E(0) = init_fraction * delta0 * alpha^3.
    pub delta0: f64,
    pub init_fraction: f64,
    /// Kreiss-Oliger coefficient for the explicit transport stage (0 disables).
    pub ko_sigma: f64,
    pub cfl_max: f64,
    /// Guard for |tan(beta) * Phi| in velocity evaluation.
    pub tan_guard: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params::with_alpha(0.1)
    }
}

impl Params {
    pub fn with_alpha(alpha: f64) -> Self {
        Params {
            alpha,
            eta: ETA,
            gamma: 1.0 + alpha / 10.0,
            delta: alpha,
            k: 4,
            n_beta: 64,
            n_sigma: 128,
            sigma_min: -20.0,
            sigma_max: 20.0,
            lnrho_min: -20.0,
            lnrho_max: 20.0,
            l2_0: 1.0,
            lambda_0: 1.0,
            mu_0: 1.0,
            dt: 2.5e-3,
            s_end: 10.0,
            tol_linear: 1e-10,
            tol_quad: 1e-8,
            c_embed: 1.0,
            delta0: 1e-2,
            init_fraction: 0.5,
            ko_sigma: 0.5,
            cfl_max: 0.8,
            tan_guard: 1e8,
        }
    }

    /// Changes alpha and the quantities tied to it (gamma always, delta when it
    /// was still following alpha).
    pub fn set_alpha(&mut self, alpha: f64) {
        if self.delta == self.alpha {
            self.delta = alpha;
        }
        self.alpha = alpha;
        self.gamma = 1.0 + alpha / 10.0;
    }

    pub fn with_resolution(mut self, n_sigma: usize, n_beta: usize) -> Self {
        self.n_sigma = n_sigma;
        self.n_beta = n_beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::InvalidParams(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.eta != ETA {
            return bad(format!("eta is fixed at 0.99, got {}", self.eta));
        }
        if self.gamma != 1.0 + self.alpha / 10.0 {
            return bad(format!("gamma must equal 1 + alpha/10, got {}", self.gamma));
        }
        if !self.delta.is_finite() {
            return bad("delta must be finite".into());
        }
        if self.k < 1 {
            return bad("Sobolev index k must be >= 1".into());
        }
        if self.n_beta < 16 || self.n_sigma < 16 {
            return bad(format!(
                "node counts must be >= 16 (n_beta={}, n_sigma={})",
                self.n_beta, self.n_sigma
            ));
        }
        if !(self.sigma_min < 0.0 && 0.0 < self.sigma_max) {
            return bad("need sigma_min < 0 < sigma_max".into());
        }
        if !(self.lnrho_min < 0.0 && 0.0 < self.lnrho_max) {
            return bad("need lnrho_min < 0 < lnrho_max".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.s_end >= 0.0) {
            return bad("s_end must be non-negative".into());
        }
        for (name, v) in [
            ("l2_0", self.l2_0),
            ("lambda_0", self.lambda_0),
            ("mu_0", self.mu_0),
            ("tol_linear", self.tol_linear),
            ("tol_quad", self.tol_quad),
            ("c_embed", self.c_embed),
            ("cfl_max", self.cfl_max),
            ("tan_guard", self.tan_guard),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.delta0 >= 0.0 && self.init_fraction >= 0.0 && self.ko_sigma >= 0.0) {
            return bad("delta0, init_fraction and ko_sigma must be non-negative".into());
        }
        Ok(())
    }
}
