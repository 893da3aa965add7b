//! Seeded random fields that respect the angular boundary classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{Frame, Parity, ScalarField, Sym};
use crate::grid::Grid;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Angular class of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// sin(2b) Q(cos 2b): vanishes at both ends (vorticity, xi, stream function).
    Odd,
    /// Q(cos 2b): zero slope at both ends (phi).
    Even,
    /// sin(b) Q(cos 2b): vanishes at 0, zero slope at pi/2 (theta).
    Theta,
}

impl Kind {
    pub fn parity(self) -> Parity {
        match self {
            Kind::Odd => Parity::ODD,
            Kind::Even => Parity::EVEN,
            Kind::Theta => Parity::new(Sym::Odd, Sym::Even),
        }
    }
}

pub fn coeffs(rng: &mut SampleRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// Angular factor of the given class with polynomial coefficients `c`.
pub fn beta_factor(kind: Kind, c: &[f64], beta: f64) -> f64 {
    let q = poly(c, (2.0 * beta).cos());
    match kind {
        Kind::Odd => (2.0 * beta).sin() * q,
        Kind::Even => q,
        Kind::Theta => beta.sin() * q,
    }
}

/// Random separable field P(t) e^{-t^2} B(beta), with t = sigma on the y
/// axis and t = ln rho_bar on the ybar axis. The leading coefficient of each
/// polynomial is kept away from zero so samples are never degenerate.
pub fn admissible_field(grid: &Grid, frame: Frame, kind: Kind, rng: &mut SampleRng) -> ScalarField {
    let mut pr = coeffs(rng, 3);
    pr[0] = 1.0 + 0.5 * pr[0];
    let mut pb = coeffs(rng, 3);
    pb[0] = 1.0 + 0.5 * pb[0];
    let alpha = grid.alpha;
    ScalarField::from_fn(grid, frame, kind.parity(), |s, b| {
        let t = match frame {
            Frame::Y => s,
            Frame::YBar => s / alpha,
        };
        poly(&pr, t) * (-t * t).exp() * beta_factor(kind, &pb, b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;

    #[test]
    fn seeded_fields_repeat() {
        let g = Grid::new(&Params::default().with_resolution(16, 16)).unwrap();
        let a = admissible_field(&g, Frame::Y, Kind::Odd, &mut rng(7));
        let b = admissible_field(&g, Frame::Y, Kind::Odd, &mut rng(7));
        let c = admissible_field(&g, Frame::Y, Kind::Odd, &mut rng(8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn factors_meet_boundary_classes() {
        let c = [0.3, -0.2, 0.7];
        let e = 1e-7;
        let h = std::f64::consts::FRAC_PI_2;
        assert!(beta_factor(Kind::Odd, &c, 0.0).abs() < 1e-15);
        assert!(beta_factor(Kind::Odd, &c, h).abs() < 1e-15);
        assert!(beta_factor(Kind::Theta, &c, 0.0).abs() < 1e-15);
        let slope = |k: Kind, b: f64| (beta_factor(k, &c, b + e) - beta_factor(k, &c, b - e)) / (2.0 * e);
        assert!(slope(Kind::Even, 0.0).abs() < 1e-7);
        assert!(slope(Kind::Even, h).abs() < 1e-7);
        assert!(slope(Kind::Theta, h).abs() < 1e-7);
    }
}
