//! Config-file driven experiment commands. Each command reads a [`RunConfig`],
//! writes artifacts (CSV/JSON/OBJ plus a run manifest) into the output
//! directory, and reports a pass/fail verdict for the process exit status.

mod commands;
mod config;
mod scenarios;

pub use commands::{
    cmd_gamma_scan, cmd_multiplicity, cmd_reduce, cmd_solve, cmd_validate, solve_with, with_pool,
    CheckItem, CriticalPointRecord, GammaScanOutput, MultiplicityRun, MultiplicityVerdict,
    ReduceReport, SolveBubble, SolveOutput, ValidateReport,
};
pub use config::RunConfig;
pub use scenarios::Scenario;
