//! Damped nonlinear wave equation `u_tt - u_xx + V(x) u_t = f(u_t, u_x)` in one space
//! dimension with `V(x) = mu0 (1 + x^2)^{-1/2}`.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod duhamel;
pub mod energetics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod potential;
pub mod scalar;
pub mod wavesolver;

pub use blowup::{
    critical_case_probe, estimate_lifespan, fit_critical, fit_lifespan, geometric_ladder, sweep, sweep_and_fit,
    theory_slope, CriticalProbe, LifespanFit, LifespanRecord, LifespanSetup,
};
pub use duhamel::{picard_iterate, PicardConfig, PicardResult};
pub use energetics::{compute_report, fit_decay, record_energies, DecayFit};
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use potential::{check_sign_condition, eval_potential, psi_mass, solve_phi};
pub use scalar::Scalar;
pub use wavesolver::{make_initial_data, run, Nonlinearity, Profile, Sampling, Scheme, Termination};

pub type Grid64 = grid::Grid<f64>;
pub type Field64 = grid::Field<f64>;
pub type Potential64 = potential::PotentialParams<f64>;
pub type PhiTable64 = potential::PhiTable<f64>;
pub type Solver64 = wavesolver::SolverConfig<f64>;
pub type State64 = wavesolver::WaveState<f64>;
pub type Energy64 = energetics::EnergyReport<f64>;
pub type Picard64 = duhamel::PicardConfig<f64>;

pub type Grid32 = grid::Grid<f32>;
pub type Field32 = grid::Field<f32>;
pub type Potential32 = potential::PotentialParams<f32>;
pub type PhiTable32 = potential::PhiTable<f32>;
pub type Solver32 = wavesolver::SolverConfig<f32>;
pub type State32 = wavesolver::WaveState<f32>;
