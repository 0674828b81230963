//! Numerical lifespans under grid refinement, eps sweeps and log-log fits.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::io::{fmt_f64, CsvWriter};
use crate::potential::{check_sign_condition, solve_phi, PotentialParams, DEFAULT_PHI_STEP};
use crate::scalar::linear_regression;
use crate::wavesolver::{
    make_initial_data, run, Nonlinearity, Perturbation, Profile, Sampling, SolverConfig, DEFAULT_BLOWUP_THRESHOLD,
};

pub const DEFAULT_T_BUDGET: f64 = 500.0;
pub const DEFAULT_BASE_DX: f64 = 0.125;
pub const DEFAULT_REFINEMENTS: usize = 3;
/// Relative change of `T_num` under one halving accepted as converged.
pub const REFINEMENT_TOL: f64 = 0.02;
pub const LADDER_RATIO: f64 = std::f64::consts::SQRT_2;
pub const MIN_LADDER: usize = 5;
pub const MIN_FIT_RECORDS: usize = 4;

/// Everything but `eps` that defines one lifespan run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanSetup {
    pub mu0: f64,
    pub nonlinearity: Nonlinearity,
    pub r0: f64,
    pub profile: Profile,
    /// Seeded modulation applied to both data components.
    pub perturbation: Option<Perturbation>,
    pub t_budget: f64,
    pub base_dx: f64,
    pub cfl: f64,
    pub threshold: f64,
    pub max_refinements: usize,
    pub refinement_tol: f64,
}

impl LifespanSetup {
    pub fn new(mu0: f64, nonlinearity: Nonlinearity, profile: Profile) -> Self {
        LifespanSetup {
            mu0,
            nonlinearity,
            r0: 1.0,
            profile,
            perturbation: None,
            t_budget: DEFAULT_T_BUDGET,
            base_dx: DEFAULT_BASE_DX,
            cfl: crate::wavesolver::DEFAULT_CFL,
            threshold: DEFAULT_BLOWUP_THRESHOLD,
            max_refinements: DEFAULT_REFINEMENTS,
            refinement_tol: REFINEMENT_TOL,
        }
    }

    /// `|u_t|^p` with the velocity-bump profile.
    pub fn abs_p(mu0: f64, p: f64) -> Self {
        Self::new(mu0, Nonlinearity::AbsP { p }, Profile::VelocityBump)
    }

    pub fn with_budget(mut self, t_budget: f64) -> Self {
        self.t_budget = t_budget;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn p(&self) -> Result<f64> {
        match self.nonlinearity {
            Nonlinearity::AbsP { p } | Nonlinearity::SignedP { p } => Ok(p),
            other => Err(Error::param(
                "nonlinearity",
                format!("lifespans need |u_t|^p or |u_t|^(p-1)u_t, got {}", other.name()),
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        self.p()?;
        self.nonlinearity.validate()?;
        PotentialParams::new(self.mu0)?;
        if !(self.base_dx > 0.0) || !(self.t_budget > 0.0) || !(self.r0 > 0.0) {
            return Err(Error::param("setup", "base_dx, t_budget and R0 must be positive"));
        }
        if matches!(self.profile, Profile::Custom { .. }) && self.max_refinements > 0 {
            return Err(Error::param(
                "profile",
                "custom samples fix the grid; set max_refinements = 0",
            ));
        }
        Ok(())
    }

    fn data(&self, eps: f64, grid: &Grid<f64>) -> Result<(Field<f64>, Field<f64>)> {
        let (mut u0, mut u1) = make_initial_data(&self.profile, self.r0, eps, grid)?;
        if let Some(pert) = &self.perturbation {
            pert.apply(&mut u0, self.r0);
            pert.apply(&mut u1, self.r0);
        }
        Ok((u0, u1))
    }

    fn solver(&self) -> SolverConfig<f64> {
        SolverConfig::new(self.mu0, self.nonlinearity, self.r0, self.t_budget)
            .with_cfl(self.cfl)
            .with_threshold(self.threshold)
    }
}

/// One blow-up time per refinement level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    pub level: usize,
    pub dx: f64,
    /// `None` when the run reached the budget.
    pub t_blowup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanRecord {
    pub eps: f64,
    pub p: f64,
    pub mu0: f64,
    pub r0: f64,
    pub nonlinearity: Nonlinearity,
    /// Finest detected blow-up time; `None` if censored.
    pub t_num: Option<f64>,
    pub refinement_level: usize,
    pub threshold_used: f64,
    /// `\int (u0'' + u1) phi` of the unscaled profile.
    pub sign_integral: f64,
    /// Last halving changed `T_num` by less than the tolerance.
    pub converged: bool,
    pub levels: Vec<LevelRun>,
}

impl LifespanRecord {
    pub fn censored(&self) -> bool {
        self.t_num.is_none()
    }

    /// Uncensored, converged and with a positive sign integral.
    pub fn accepted(&self) -> bool {
        self.t_num.is_some_and(|t| t > 0.0) && self.converged && self.sign_integral > 0.0
    }

    /// Relative change on the last halving, when there was one.
    pub fn last_change(&self) -> Option<f64> {
        let n = self.levels.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (self.levels[n - 2].t_blowup?, self.levels[n - 1].t_blowup?);
        Some((b - a).abs() / b)
    }
}

/// `\int (u0'' + u1) phi` for the unit-amplitude profile.
pub fn profile_sign_integral(setup: &LifespanSetup) -> Result<f64> {
    let solver = setup.solver();
    let grid = solver.grid_for(setup.base_dx)?;
    let (u0, u1) = setup.data(1.0, &grid)?;
    let table = solve_phi(&solver.potential()?, setup.r0 + setup.base_dx, DEFAULT_PHI_STEP)?;
    check_sign_condition(&u0, &u1, &table)
}

fn blowup_time(setup: &LifespanSetup, eps: f64, dx: f64) -> Result<Option<f64>> {
    let solver = setup.solver();
    let grid = solver.grid_for(dx)?;
    let (u0, u1) = setup.data(eps, &grid)?;
    let report = run(&u0, &u1, &solver, &Sampling::Endpoints)?.finish();
    Ok(report.termination.blowup_time())
}

/// Runs at `base_dx`, then halves `dx` until successive blow-up times differ by less than
/// the tolerance or the refinements are used up.
pub fn estimate_lifespan(eps: f64, setup: &LifespanSetup) -> Result<LifespanRecord> {
    setup.validate()?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::param("eps", format!("must be finite and >= 0, got {eps}")));
    }
    let sign_integral = profile_sign_integral(setup)?;
    if !(sign_integral > 0.0) {
        return Err(Error::SignCondition(sign_integral));
    }
    let mut record = LifespanRecord {
        eps,
        p: setup.p()?,
        mu0: setup.mu0,
        r0: setup.r0,
        nonlinearity: setup.nonlinearity,
        t_num: None,
        refinement_level: 0,
        threshold_used: setup.threshold,
        sign_integral,
        converged: false,
        levels: Vec::new(),
    };
    if eps == 0.0 {
        // the zero solution is global
        record.converged = true;
        return Ok(record);
    }
    let mut dx = setup.base_dx;
    for level in 0..=setup.max_refinements {
        let t = blowup_time(setup, eps, dx)?;
        log::debug!("eps {eps}: level {level} dx {dx} -> {t:?}");
        record.levels.push(LevelRun { level, dx, t_blowup: t });
        record.refinement_level = level;
        record.t_num = t;
        let Some(t) = t else { break };
        if level > 0 {
            let prev = record.levels[level - 1].t_blowup.expect("previous level blew up");
            if (t - prev).abs() / t < setup.refinement_tol {
                record.converged = true;
                break;
            }
        }
        dx *= 0.5;
    }
    if record.t_num.is_none() {
        // censored records are final at whatever level reached the budget
        record.converged = true;
    }
    Ok(record)
}

/// `eps_max, eps_max / r, eps_max / r^2, ...`
pub fn geometric_ladder(eps_max: f64, ratio: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| eps_max * ratio.powi(-(k as i32))).collect()
}

/// Independent records, computed in parallel and returned in ladder order.
pub fn sweep(eps_ladder: &[f64], setup: &LifespanSetup) -> Result<Vec<LifespanRecord>> {
    eps_ladder.par_iter().map(|&e| estimate_lifespan(e, setup)).collect()
}

/// `-2(p-1) / (2 - mu0 (p-1))`
pub fn theory_slope(p: f64, mu0: f64) -> Result<f64> {
    let k = mu0 * (p - 1.0);
    if !(k < 2.0) {
        return Err(Error::NotSubcritical(k));
    }
    Ok(-2.0 * (p - 1.0) / (2.0 - k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theory_slope: f64,
    pub rel_error: f64,
    pub eps_range: (f64, f64),
    pub points_used: usize,
    pub p: f64,
    pub mu0: f64,
    /// `mu0 > 1`, where the critical exponent is not settled.
    pub exploratory: bool,
}

/// Least squares of `ln T_num` on `ln eps` over accepted records.
pub fn fit_lifespan(records: &[LifespanRecord], p: f64, mu0: f64) -> Result<LifespanFit> {
    let theory = theory_slope(p, mu0)?;
    let used: Vec<&LifespanRecord> = records.iter().filter(|r| r.accepted()).collect();
    if used.len() < MIN_FIT_RECORDS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_RECORDS,
            got: used.len(),
        });
    }
    let xs: Vec<f64> = used.iter().map(|r| r.eps.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.t_num.expect("accepted").ln()).collect();
    let (slope, intercept, r2) = linear_regression(&xs, &ys);
    let lo = used.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min);
    let hi = used.iter().map(|r| r.eps).fold(f64::NEG_INFINITY, f64::max);
    Ok(LifespanFit {
        slope,
        intercept,
        r_squared: r2,
        theory_slope: theory,
        rel_error: ((slope - theory) / theory).abs(),
        eps_range: (lo, hi),
        points_used: used.len(),
        p,
        mu0,
        exploratory: mu0 > 1.0,
    })
}

/// Sweeps a ladder and fits the lifespan exponent.
pub fn sweep_and_fit(eps_ladder: &[f64], setup: &LifespanSetup) -> Result<(LifespanFit, Vec<LifespanRecord>)> {
    let p = setup.p()?;
    theory_slope(p, setup.mu0)?;
    if eps_ladder.len() < MIN_LADDER {
        return Err(Error::TooFewPoints {
            needed: MIN_LADDER,
            got: eps_ladder.len(),
        });
    }
    let records = sweep(eps_ladder, setup)?;
    Ok((fit_lifespan(&records, p, setup.mu0)?, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRow {
    pub eps: f64,
    pub log_t: f64,
    pub eps_pow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalProbe {
    pub p: f64,
    pub mu0: f64,
    pub rows: Vec<CriticalRow>,
    /// Slope of `ln T` against `eps^{-(p-1)}`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub censored: usize,
}

/// Fits `ln T = C eps^{-(p-1)} + b` over uncensored records.
pub fn fit_critical(records: &[LifespanRecord], p: f64, mu0: f64) -> Result<CriticalProbe> {
    let rows: Vec<CriticalRow> = records
        .iter()
        .filter_map(|r| {
            let t = r.t_num?;
            Some(CriticalRow {
                eps: r.eps,
                log_t: t.ln(),
                eps_pow: r.eps.powf(-(p - 1.0)),
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::AllCensored);
    }
    if rows.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: rows.len(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.eps_pow).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.log_t).collect();
    let (slope, intercept, r2) = linear_regression(&xs, &ys);
    Ok(CriticalProbe {
        p,
        mu0,
        censored: records.len() - rows.len(),
        rows,
        slope,
        intercept,
        r_squared: r2,
    })
}

/// Lifespans at the critical power `p = 1 + 2/mu0`; `setup` supplies everything but `p`.
pub fn critical_case_probe(eps_ladder: &[f64], setup: &LifespanSetup) -> Result<(CriticalProbe, Vec<LifespanRecord>)> {
    if !(setup.mu0 > 0.0) {
        return Err(Error::param("mu0", "critical power needs mu0 > 0"));
    }
    let p = 1.0 + 2.0 / setup.mu0;
    let nonlinearity = match setup.nonlinearity {
        Nonlinearity::SignedP { .. } => Nonlinearity::SignedP { p },
        _ => Nonlinearity::AbsP { p },
    };
    let setup = LifespanSetup {
        nonlinearity,
        ..setup.clone()
    };
    let records = sweep(eps_ladder, &setup)?;
    Ok((fit_critical(&records, p, setup.mu0)?, records))
}

pub fn write_records_csv<W: Write>(records: &[LifespanRecord], out: W) -> io::Result<W> {
    let mut w = CsvWriter::new(
        out,
        &[
            "eps",
            "p",
            "mu0",
            "T_num",
            "level",
            "censored",
            "converged",
            "sign_integral",
            "threshold",
        ],
    )?;
    for r in records {
        w.row(&[
            fmt_f64(r.eps),
            fmt_f64(r.p),
            fmt_f64(r.mu0),
            r.t_num.map_or_else(|| "nan".to_string(), fmt_f64),
            r.refinement_level.to_string(),
            r.censored().to_string(),
            r.converged.to_string(),
            fmt_f64(r.sign_integral),
            fmt_f64(r.threshold_used),
        ])?;
    }
    w.finish()
}
