//! Numerical laboratory for the dynamic-rescaling formulation of the
//! axisymmetric, swirl-free Boussinesq system with temperature diffusion.
//!
//! Radial coordinates are logarithmic (`sigma = ln y`), angular nodes are
//! cell-centred on `(0, pi/2)`.

pub mod calculus;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod params;
pub mod profiles;
pub mod samples;
pub mod stencil;
pub mod verify;

pub use error::{LabError, Result};
pub use field::{Frame, Parity, ScalarField, Sym};
pub use grid::Grid;
pub use params::Params;
