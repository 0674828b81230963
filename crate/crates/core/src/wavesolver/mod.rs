//! Time stepping for `u_tt - u_xx + V(x) u_t = f(u_t, u_x)` on `[-L, L]` with Dirichlet
//! ends, compactly supported data and a cone-tracking leapfrog scheme.

mod config;
mod initial;
mod leapfrog;
mod nonlinearity;
mod oracle;
mod run;
mod state;

pub use config::{Scheme, SolverConfig, DEFAULT_BLOWUP_THRESHOLD, DEFAULT_CFL, ORACLE_SUBSTEPS};
pub use initial::{bump, double_bump, make_initial_data, Perturbation, Profile};
pub use leapfrog::Leapfrog;
pub use nonlinearity::{Nonlinearity, SourceTerm};
pub use oracle::OracleRk;
pub use run::{manifest_json, run, run_with, sample_levels, RunReport, Sampling, Simulation, Termination, Trajectory};
pub use state::{support_radius, WaveState};
