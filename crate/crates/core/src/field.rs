//! Grid-sampled scalar fields with a frame tag and angular parity.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Radial node sigma = ln y.
    Y,
    /// Radial node sigma_bar = ln ybar.
    YBar,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::Y => "Y_FRAME",
            Frame::YBar => "YBAR_FRAME",
        }
    }
}

/// Reflection rule at one end of the beta interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sym {
    Odd,
    Even,
    None,
}

impl Sym {
    pub fn flip(self) -> Sym {
        match self {
            Sym::Odd => Sym::Even,
            Sym::Even => Sym::Odd,
            Sym::None => Sym::None,
        }
    }

    pub fn sign(self) -> Option<f64> {
        match self {
            Sym::Odd => Some(-1.0),
            Sym::Even => Some(1.0),
            Sym::None => None,
        }
    }
}

/// Parity at beta = 0 (`lo`) and beta = pi/2 (`hi`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parity {
    pub lo: Sym,
    pub hi: Sym,
}

impl Parity {
    pub const ODD: Parity = Parity { lo: Sym::Odd, hi: Sym::Odd };
    pub const EVEN: Parity = Parity { lo: Sym::Even, hi: Sym::Even };
    pub const NONE: Parity = Parity { lo: Sym::None, hi: Sym::None };

    pub const fn new(lo: Sym, hi: Sym) -> Parity {
        Parity { lo, hi }
    }

    /// Parity after one beta derivative.
    pub fn flip(self) -> Parity {
        Parity { lo: self.lo.flip(), hi: self.hi.flip() }
    }

    /// Parity of a pointwise product.
    pub fn times(self, other: Parity) -> Parity {
        let m = |a: Sym, b: Sym| match (a.sign(), b.sign()) {
            (Some(x), Some(y)) if x * y > 0.0 => Sym::Even,
            (Some(_), Some(_)) => Sym::Odd,
            _ => Sym::None,
        };
        Parity { lo: m(self.lo, other.lo), hi: m(self.hi, other.hi) }
    }
}

/// Row-major samples: `data[i * n_beta + j]` is radial node i, angular node j.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub n_sigma: usize,
    pub n_beta: usize,
    pub data: Vec<f64>,
    pub frame: Frame,
    pub parity: Parity,
}

impl ScalarField {
    pub fn zeros(grid: &Grid, frame: Frame, parity: Parity) -> Self {
        ScalarField {
            n_sigma: grid.n_sigma,
            n_beta: grid.n_beta,
            data: vec![0.0; grid.len()],
            frame,
            parity,
        }
    }

    /// Samples `f(sigma, beta)` where sigma is the frame's radial log node.
    pub fn from_fn<F>(grid: &Grid, frame: Frame, parity: Parity, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64,
    {
        let ax = grid.axis(frame);
        let mut data = Vec::with_capacity(grid.len());
        for &s in &ax.nodes {
            for &b in &grid.beta {
                data.push(f(s, b));
            }
        }
        ScalarField { n_sigma: grid.n_sigma, n_beta: grid.n_beta, data, frame, parity }
    }

    pub fn from_data(grid: &Grid, frame: Frame, parity: Parity, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(LabError::Shape(format!(
                "expected {} values, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(ScalarField { n_sigma: grid.n_sigma, n_beta: grid.n_beta, data, frame, parity })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_beta + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_beta + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_beta..(i + 1) * self.n_beta]
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.n_sigma != grid.n_sigma || self.n_beta != grid.n_beta {
            return Err(LabError::Shape(format!(
                "field is {}x{}, grid is {}x{}",
                self.n_sigma, self.n_beta, grid.n_sigma, grid.n_beta
            )));
        }
        Ok(())
    }

    pub fn check_frame(&self, frame: Frame) -> Result<()> {
        if self.frame != frame {
            return Err(LabError::FrameMismatch {
                expected: frame.name().into(),
                got: self.frame.name().into(),
            });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.n_sigma != other.n_sigma || self.n_beta != other.n_beta {
            return Err(LabError::Shape("fields differ in shape".into()));
        }
        Ok(())
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x = f(*x));
        out
    }

    /// Pointwise `f(i, j, value)`.
    pub fn map_indexed<F: Fn(usize, usize, f64) -> f64>(&self, f: F) -> ScalarField {
        let mut out = self.clone();
        let nb = self.n_beta;
        for (k, x) in out.data.iter_mut().enumerate() {
            *x = f(k / nb, k % nb, *x);
        }
        out
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        self.map(|x| a * x)
    }

    /// `self + a * other`, keeping self's tags.
    pub fn axpy(&self, a: f64, other: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        out
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.axpy(-1.0, other)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x *= y;
        }
        out.parity = self.parity.times(other.parity);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;

    #[test]
    fn parity_algebra() {
        assert_eq!(Parity::ODD.flip(), Parity::EVEN);
        let mixed = Parity::new(Sym::Even, Sym::Odd);
        assert_eq!(mixed.flip(), Parity::new(Sym::Odd, Sym::Even));
        assert_eq!(Parity::ODD.times(Parity::ODD), Parity::EVEN);
        assert_eq!(Parity::ODD.times(Parity::EVEN), Parity::ODD);
        assert_eq!(Parity::NONE.times(Parity::EVEN), Parity::NONE);
    }

    #[test]
    fn layout_is_sigma_major() {
        let g = Grid::new(&Params::default().with_resolution(16, 16)).unwrap();
        let f = ScalarField::from_fn(&g, Frame::Y, Parity::NONE, |s, b| s + 100.0 * b);
        let want = g.y_axis.nodes[3] + 100.0 * g.beta[5];
        assert_eq!(f.at(3, 5), want);
        assert_eq!(f.data[3 * 16 + 5], want);
    }

    #[test]
    fn frame_checks() {
        let g = Grid::new(&Params::default().with_resolution(16, 16)).unwrap();
        let f = ScalarField::zeros(&g, Frame::YBar, Parity::ODD);
        assert!(f.check_frame(Frame::Y).is_err());
        assert!(f.check_frame(Frame::YBar).is_ok());
        assert!(ScalarField::from_data(&g, Frame::Y, Parity::ODD, vec![0.0; 3]).is_err());
    }
}
