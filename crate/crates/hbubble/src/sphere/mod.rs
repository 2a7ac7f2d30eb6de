//! Discretization of the sphere: quadrature grid, real spherical-harmonic
//! transforms, frame derivatives, and map carriers.

mod field;
mod grid;
mod legendre;
mod map;

pub use field::{FrameDerivatives, GridField, SpectralField};
pub use grid::{surface_gradient, QuadratureGrid, MAX_DEGREE, MIN_DEGREE};
pub use legendre::gauss_legendre;
pub use map::{omega_chart, MapS2R3};
