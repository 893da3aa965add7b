//! Tensor grid: cell-centred angular nodes, uniform log-radial nodes.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Frame;
use crate::params::Params;
use crate::stencil::{CellQuadrature, RadialOp};

/// Uniform, endpoint-inclusive radial axis in a log variable.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialAxis {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub h: f64,
    pub nodes: Vec<f64>,
    /// Trapezoid weights in the log variable.
    pub weights: Vec<f64>,
    pub d1: RadialOp,
    pub d2: RadialOp,
    pub quad: CellQuadrature,
}

impl RadialAxis {
    pub fn new(n: usize, min: f64, max: f64) -> Result<Self> {
        if n < 8 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(LabError::Grid(format!(
                "cannot build a uniform axis with n={n} on [{min}, {max}]"
            )));
        }
        let h = (max - min) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| min + i as f64 * h).collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Ok(RadialAxis {
            n,
            min,
            max,
            h,
            nodes,
            weights,
            d1: RadialOp::derivative(n, h, 1),
            d2: RadialOp::derivative(n, h, 2),
            quad: CellQuadrature::new(n, h),
        })
    }

    /// Fractional index of `x` (0 at `min`, n-1 at `max`).
    pub fn position(&self, x: f64) -> f64 {
        (x - self.min) / self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub alpha: f64,
    pub n_beta: usize,
    pub n_sigma: usize,
    pub h_beta: f64,
    pub beta: Vec<f64>,
    pub sin_b: Vec<f64>,
    pub cos_b: Vec<f64>,
    pub tan_b: Vec<f64>,
    pub sin2b: Vec<f64>,
    /// Axis of sigma = ln y.
    pub y_axis: RadialAxis,
    /// Axis of sigma_bar = ln ybar = alpha * ln rho_bar.
    pub ybar_axis: RadialAxis,
}

/// Serializable description used by snapshot sidecars and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub alpha: f64,
    pub n_beta: usize,
    pub n_sigma: usize,
    pub beta_layout: String,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_bar_min: f64,
    pub sigma_bar_max: f64,
}

impl Grid {
    pub fn new(p: &Params) -> Result<Self> {
        p.validate()?;
        let nb = p.n_beta;
        let h_beta = FRAC_PI_2 / nb as f64;
        let beta: Vec<f64> = (0..nb).map(|j| (j as f64 + 0.5) * h_beta).collect();
        let y_axis = RadialAxis::new(p.n_sigma, p.sigma_min, p.sigma_max)?;
        let ybar_axis =
            RadialAxis::new(p.n_sigma, p.alpha * p.lnrho_min, p.alpha * p.lnrho_max)?;
        Ok(Grid {
            alpha: p.alpha,
            n_beta: nb,
            n_sigma: p.n_sigma,
            h_beta,
            sin_b: beta.iter().map(|b| b.sin()).collect(),
            cos_b: beta.iter().map(|b| b.cos()).collect(),
            tan_b: beta.iter().map(|b| b.tan()).collect(),
            sin2b: beta.iter().map(|b| (2.0 * b).sin()).collect(),
            beta,
            y_axis,
            ybar_axis,
        })
    }

    pub fn len(&self) -> usize {
        self.n_sigma * self.n_beta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_beta + j
    }

    pub fn axis(&self, frame: Frame) -> &RadialAxis {
        match frame {
            Frame::Y => &self.y_axis,
            Frame::YBar => &self.ybar_axis,
        }
    }

    /// rho_bar at node `i` of the ybar axis.
    pub fn rhobar(&self, i: usize) -> f64 {
        (self.ybar_axis.nodes[i] / self.alpha).exp()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            alpha: self.alpha,
            n_beta: self.n_beta,
            n_sigma: self.n_sigma,
            beta_layout: "midpoint".into(),
            sigma_min: self.y_axis.min,
            sigma_max: self.y_axis.max,
            sigma_bar_min: self.ybar_axis.min,
            sigma_bar_max: self.ybar_axis.max,
        }
    }
}

// Frame maps between sigma = ln y, y, ybar = l2 * y and rho_bar = ybar^(1/alpha).

pub fn y_of_sigma(sigma: f64) -> f64 {
    sigma.exp()
}

pub fn ybar_of_y(y: f64, l2: f64) -> f64 {
    l2 * y
}

pub fn rhobar_of_ybar(ybar: f64, alpha: f64) -> f64 {
    ybar.powf(1.0 / alpha)
}

/// Inverse of the chain sigma -> y -> ybar -> rho_bar, taken in log form.
pub fn sigma_of_rhobar(rhobar: f64, l2: f64, alpha: f64) -> f64 {
    alpha * rhobar.ln() - l2.ln()
}
