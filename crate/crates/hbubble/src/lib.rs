//! Numerical laboratory for sphere-type surfaces with prescribed mean curvature
//! `H = H0 + eps*H1`, where `H0` is a nonzero constant and `eps` is small.
//!
//! The crate discretizes maps `u: S^2 -> R^3` with real spherical harmonics on a
//! Gauss-Legendre x uniform-longitude grid and builds, on top of that:
//!
//! * the variational core (Dirichlet energy, enclosed volumes, H-system residual
//!   and its first/second variations) in [`functionals`];
//! * curvature perturbations `H1` with analytic derivatives, a small line-based
//!   DSL, and samplers for the standing hypotheses in [`fields`];
//! * the landscape function `Gamma(p)` (the integral of `H1` over unit-scale
//!   balls) and its critical points in [`melnikov`];
//! * the constrained correction `eta(eps, p)`, the reduced three-variable
//!   functional `Phi_eps`, and its critical-point search in [`reduction`];
//! * surface verification (branch points, conformality, extracted curvature,
//!   mesh export) in [`diagnostics`];
//! * config-file driven experiment commands in [`cli`], exposed both through the
//!   `hbubble` binary and through `cargo run --example ...` programs.
//!
//! Start with `examples/validate_unperturbed.rs` for the unperturbed round
//! sphere, then `examples/find_bubbles.rs` for the full pipeline.

pub mod cli;
pub mod diagnostics;
pub mod error;
mod io_util;
pub mod fields;
pub mod functionals;
pub mod melnikov;
pub mod reduction;
pub mod sphere;

pub use error::{Error, Result};
pub use fields::{CurvatureField, DecayHint, HypothesisReport};
pub use functionals::{EnergyBreakdown, Workspace};
pub use melnikov::{BallQuadrature, MelnikovReport};
pub use reduction::{ReductionState, Reductor, TangentFrame};

pub use sphere::{omega_chart, GridField, MapS2R3, QuadratureGrid, SpectralField};
