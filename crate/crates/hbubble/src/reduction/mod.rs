//! Finite-dimensional reduction: the tangent frame of the unperturbed critical
//! manifold, the bordered linearization, the constrained correction
//! `eta(eps, p)`, and critical points of the reduced functional `Phi_eps`.

mod bordered;
mod frame;
mod search;
mod solver;

pub use bordered::{assemble_bordered, border_columns, BorderedOperator};
pub use frame::{analytic_kernel_fields, raw_tangent_fields, tangent_frame, TangentFrame};
pub use search::{PhiCritical, PhiGradient, PhiSearchOpts, PhiSearchResult};
pub use solver::{ExpansionRow, ReductionState, Reductor, SolveMode, SolveOpts};
