use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::blowup::{estimate_lifespan, fit_critical, fit_lifespan, write_records_csv, LifespanRecord, LifespanSetup};
use crate::duhamel::{picard_grid, picard_iterate, PicardConfig};
use crate::energetics::{
    compute_report_with, decay_alpha, default_a, fit_decay, threshold_t0, threshold_t1, verify_dissipation,
    verify_equivalence_bounds, verify_monotone_e0, verify_monotone_f_a, write_reports_csv, EnergyReport, EnergySeries,
};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::io::{fmt_f64, write_atomic, CsvWriter};
use crate::potential::{check_phi_growth, psi_mass, solve_phi, PotentialParams};
use crate::wavesolver::{
    make_initial_data, manifest_json, run, sample_levels, RunReport, Sampling, Scheme, SolverConfig, WaveState,
};

/// Pass/fail of one embedded invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl InvariantResult {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        InvariantResult {
            name: name.into(),
            passed: value <= limit,
            value: finite(value),
            limit: Some(limit),
            detail: format!("{value:e} <= {limit:e}"),
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        InvariantResult {
            name: name.into(),
            passed: value >= limit,
            value: finite(value),
            limit: Some(limit),
            detail: format!("{value:e} >= {limit:e}"),
        }
    }

    fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        InvariantResult {
            name: name.into(),
            passed,
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self::flag(name, false, err.to_string())
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// One unit of dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub index: usize,
    pub id: String,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Decay,
    Phi,
    Dissipation { level: usize, dx: f64 },
    Lifespan { eps: f64 },
    Picard,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub id: String,
    pub task: Task,
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub directory: PathBuf,
    pub config: ExperimentConfig,
    pub jobs: Vec<JobSummary>,
    /// Paths relative to `directory`, in job order then aggregate order.
    pub artifacts: Vec<String>,
    pub invariants: Vec<InvariantResult>,
    pub passed: bool,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn failed_invariants(&self) -> Vec<&InvariantResult> {
        self.invariants.iter().filter(|i| !i.passed).collect()
    }

    pub fn invariant(&self, name: &str) -> Option<&InvariantResult> {
        self.invariants.iter().find(|i| i.name == name)
    }
}

/// Expands a config into its explicit job list.
pub fn plan_jobs(config: &ExperimentConfig) -> Vec<Job> {
    let tasks: Vec<Task> = match config.kind {
        ExperimentKind::LinearDecay => vec![Task::Decay],
        ExperimentKind::PhiChecks => vec![Task::Phi],
        ExperimentKind::Picard => vec![Task::Picard],
        ExperimentKind::Simulate => vec![Task::Simulate],
        ExperimentKind::Dissipation => (0..config.levels)
            .map(|level| Task::Dissipation {
                level,
                dx: config.dx() * 0.5f64.powi(level as i32),
            })
            .collect(),
        ExperimentKind::LifespanSweep | ExperimentKind::CriticalProbe => config
            .eps_ladder()
            .into_iter()
            .map(|eps| Task::Lifespan { eps })
            .collect(),
    };
    tasks
        .into_iter()
        .enumerate()
        .map(|(index, task)| Job {
            index,
            id: format!("job-{index:03}"),
            task,
        })
        .collect()
}

enum Payload {
    None,
    Residual { dx: f64, residual: f64 },
    Record(Box<LifespanRecord>),
}

struct JobOutput {
    invariants: Vec<InvariantResult>,
    payload: Payload,
}

/// Collects artifacts written below the experiment directory.
struct Sink<'a> {
    root: &'a Path,
    written: Vec<String>,
}

impl<'a> Sink<'a> {
    fn new(root: &'a Path) -> Self {
        Sink {
            root,
            written: Vec::new(),
        }
    }

    fn put(&mut self, rel: String, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(&rel), bytes)?;
        self.written.push(rel);
        Ok(())
    }

    fn json(&mut self, rel: String, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(rel, text.as_bytes())
    }
}

fn solver_config(c: &ExperimentConfig) -> Result<SolverConfig<f64>> {
    Ok(SolverConfig::new(c.mu0(), c.nonlinearity()?, c.r0, c.t_end())
        .with_cfl(c.cfl)
        .with_scheme(c.scheme)
        .with_threshold(c.blowup_threshold))
}

fn grid_for(c: &ExperimentConfig, solver: &SolverConfig<f64>) -> Result<Grid<f64>> {
    let grid = match (c.half_width, c.nx) {
        (Some(l), Some(nx)) => Grid::new(l, nx)?,
        _ if c.kind == ExperimentKind::Picard => picard_grid(solver, c.t_end(), c.dx())?,
        _ => solver.grid_for(c.dx())?,
    };
    solver.validate(&grid)?;
    Ok(grid)
}

fn initial_data(c: &ExperimentConfig, grid: &Grid<f64>) -> Result<(Field<f64>, Field<f64>)> {
    let (mut u0, mut u1) = make_initial_data(&c.profile()?, c.r0, c.eps(), grid)?;
    if let Some(p) = c.perturbation() {
        p.apply(&mut u0, c.r0);
        p.apply(&mut u1, c.r0);
    }
    Ok((u0, u1))
}

fn weight_a(c: &ExperimentConfig) -> f64 {
    if c.mu0() > 0.0 {
        default_a(c.mu0(), c.r0)
    } else {
        1.25
    }
}

/// Trajectory with functionals on every sampled state and the finite-speed excess
/// `max (support_radius - (R0 + t + 2 dx))`.
struct Tracked {
    series: EnergySeries<f64>,
    report: RunReport<f64>,
    support_excess: f64,
}

fn tracked_run(
    c: &ExperimentConfig,
    solver: &SolverConfig<f64>,
    u0: &Field<f64>,
    u1: &Field<f64>,
    sampling: &Sampling<f64>,
    mut visit: impl FnMut(&WaveState<f64>) -> Result<()>,
) -> Result<Tracked> {
    let params = solver.potential()?;
    let (a, mu) = (weight_a(c), c.mu());
    let dx = u0.grid().dx();
    let tol = 1e-12 * u0.max_abs().max(u1.max_abs());
    let mut reports: Vec<EnergyReport<f64>> = Vec::new();
    let mut excess = f64::NEG_INFINITY;
    let mut traj = run(u0, u1, solver, sampling)?;
    for s in traj.by_ref() {
        reports.push(compute_report_with(&s, &params, a, mu, &solver.nonlinearity)?);
        excess = excess.max(s.support_radius(tol) - (c.r0 + s.t() + 2.0 * dx));
        visit(&s)?;
    }
    let report = traj.finish();
    let series = EnergySeries {
        nonlinearity: solver.nonlinearity,
        mu0: solver.mu0,
        reports,
    };
    Ok(Tracked {
        series,
        report,
        support_excess: excess,
    })
}

fn support_invariant(c: &ExperimentConfig, excess: f64) -> Option<InvariantResult> {
    // the reference integrator spreads a tail by its substeps
    (c.scheme == Scheme::Leapfrog).then(|| InvariantResult::at_most("finite_speed", excess, 0.0))
}

fn csv_reports(reports: &[EnergyReport<f64>]) -> Result<Vec<u8>> {
    Ok(write_reports_csv(reports, Vec::new())?)
}

/// `F_A` monotone, `E0` monotone and the equivalence bands past their threshold.
fn linear_invariants(c: &ExperimentConfig, series: &EnergySeries<f64>) -> Vec<InvariantResult> {
    let mut out = Vec::new();
    match verify_monotone_e0(series) {
        Ok(m) => out.push(InvariantResult {
            name: "e0_monotone".into(),
            passed: m.monotone,
            value: Some(m.max_increase),
            limit: None,
            detail: format!("{m:?}"),
        }),
        Err(e) => out.push(InvariantResult::failed("e0_monotone", &e)),
    }
    let params = match PotentialParams::new(c.mu0()) {
        Ok(p) => p,
        Err(e) => return vec![InvariantResult::failed("potential", &e)],
    };
    match verify_monotone_f_a(series, &params, c.r0) {
        Ok(m) => out.push(InvariantResult {
            name: "f_a_monotone".into(),
            passed: m.monotone,
            value: Some(m.max_increase),
            limit: None,
            detail: format!("{m:?}"),
        }),
        Err(e) => out.push(InvariantResult::failed("f_a_monotone", &e)),
    }
    let (mu0, mu) = (c.mu0(), c.mu());
    let threshold = if mu0 <= 1.0 {
        threshold_t0(mu0, mu, c.r0)
    } else {
        threshold_t1(mu0, c.r0)
    };
    let mut checked = 0usize;
    let mut outside = Vec::new();
    let mut extremes = (f64::INFINITY, f64::NEG_INFINITY);
    for r in series.reports.iter().filter(|r| r.t >= threshold) {
        match verify_equivalence_bounds(r, &params, c.r0, mu) {
            Ok(chk) => {
                checked += 1;
                if let Some(ratio) = chk.bands.last().and_then(|b| b.ratio) {
                    extremes = (extremes.0.min(ratio), extremes.1.max(ratio));
                }
                if !chk.all_inside() {
                    outside.push(chk.t);
                }
            }
            Err(e) => return [out, vec![InvariantResult::failed("equivalence_bands", &e)]].concat(),
        }
    }
    let band = if mu0 <= 1.0 { "E2" } else { "E4" };
    let detail = if checked == 0 {
        format!("no samples past t = {threshold}")
    } else {
        format!(
            "{band} and F_A bands on {checked} samples with t >= {threshold}; {band} ratio in [{}, {}]; outside at {:?}",
            extremes.0, extremes.1, outside
        )
    };
    out.push(InvariantResult::flag("equivalence_bands", outside.is_empty(), detail));
    out
}

fn run_decay(c: &ExperimentConfig, job: &Job, sink: &mut Sink) -> Result<JobOutput> {
    let solver = solver_config(c)?;
    let grid = grid_for(c, &solver)?;
    let (u0, u1) = initial_data(c, &grid)?;
    let tracked = tracked_run(c, &solver, &u0, &u1, &Sampling::Every(c.sample_every()), |_| Ok(()))?;
    let series = &tracked.series;
    sink.put(format!("{}/energies.csv", job.id), &csv_reports(&series.reports)?)?;
    let window = (c.window[0], c.window[1]);
    let mut invariants = Vec::new();
    let fit = fit_decay(&series.series(|r| r.weighted_combo), window);
    let derivative_fit = fit_decay(&series.series(|r| r.derivative_combo), window).ok();
    match &fit {
        Ok(f) => invariants.push(InvariantResult::at_least("decay_slope", f.slope, c.decay_floor())),
        Err(e) => invariants.push(InvariantResult::failed("decay_slope", e)),
    }
    let fit = fit.ok();
    sink.json(
        format!("{}/decay_fit.json", job.id),
        &json!({
            "mu0": c.mu0(),
            "alpha": decay_alpha(c.mu0(), c.mu()),
            "floor": c.decay_floor(),
            "weighted_combo": fit,
            "derivative_combo": derivative_fit,
        }),
    )?;
    invariants.extend(linear_invariants(c, series));
    invariants.extend(support_invariant(c, tracked.support_excess));
    Ok(JobOutput {
        invariants,
        payload: Payload::None,
    })
}

fn run_phi(c: &ExperimentConfig, job: &Job, sink: &mut Sink) -> Result<JobOutput> {
    let mu0 = c.mu0();
    let params = PotentialParams::new(mu0)?;
    let horizon = c.t_end();
    let table = solve_phi(&params, c.r_max.max(c.r0 + horizon), c.dr)?;
    let stride = table.len().div_ceil(10_000).max(1);
    sink.put(format!("{}/phi.csv", job.id), &table.write_csv(Vec::new(), stride)?)?;
    let mut invariants = vec![
        InvariantResult::at_most("phi_ode_residual", table.ode_residual(), c.phi_residual_tol),
        InvariantResult::flag("phi_positive_nondecreasing", table.is_positive_nondecreasing(), ""),
    ];

    let growth = check_phi_growth(&table)?;
    let mut w = CsvWriter::new(Vec::new(), &["r", "rho"])?;
    for k in (0..growth.r.len())
        .step_by(stride)
        .take_while(|&k| growth.r[k] <= c.r_max)
    {
        w.row_f64(&[growth.r[k], growth.rho[k]])?;
    }
    sink.put(format!("{}/growth.csv", job.id), &w.finish()?)?;
    let rho0 = growth.rho_at(0.0).unwrap_or(f64::NAN);
    let sup = growth.sup_up_to(c.r_max);
    invariants.push(InvariantResult::at_most("rho_envelope", sup / rho0, 3.0));

    let mut w = CsvWriter::new(Vec::new(), &["t", "psi_mass", "normalized"])?;
    let mut normalized = Vec::new();
    for k in 0..=(horizon.floor() as usize) {
        let t = k as f64;
        let m = psi_mass(&table, t, c.r0)?;
        let n = m / (1.0 + t).powf(mu0 / 2.0);
        w.row_f64(&[t, m, n])?;
        normalized.push(n);
    }
    sink.put(format!("{}/psi.csv", job.id), &w.finish()?)?;
    let reference = normalized[10];
    let worst = normalized.iter().copied().fold(0.0, f64::max);
    invariants.push(InvariantResult::at_most(
        "psi_mass_growth",
        worst / reference,
        c.growth_factor,
    ));

    let mut summary = json!({
        "mu0": mu0,
        "r_max": table.r_max(),
        "dr": table.dr(),
        "ode_residual": table.ode_residual(),
        "log_switch_r": table.log_switch_index().map(|k| table.r(k)),
        "rho_sup": sup,
        "rho_sup_at": growth.r_at_sup,
        "psi_ratio_max_over_t10": worst / reference,
    });
    if mu0 == 0.0 {
        let reach = c.r_max.min(20.0);
        let err = (0..table.len())
            .take_while(|&k| table.r(k) <= reach)
            .map(|k| (table.phi_node(k) - table.r(k).cosh()).abs() / table.r(k).cosh())
            .fold(0.0, f64::max);
        invariants.push(InvariantResult::at_most("cosh_limit", err, 1e-8));
        summary["cosh_rel_error"] = json!(err);
    }
    sink.json(format!("{}/phi_checks.json", job.id), &summary)?;
    Ok(JobOutput {
        invariants,
        payload: Payload::None,
    })
}

fn run_dissipation(c: &ExperimentConfig, job: &Job, dx: f64, sink: &mut Sink) -> Result<JobOutput> {
    let solver = solver_config(c)?;
    let grid = solver.grid_for(dx)?;
    solver.validate(&grid)?;
    let (u0, u1) = initial_data(c, &grid)?;
    let tracked = tracked_run(c, &solver, &u0, &u1, &Sampling::Every(c.sample_every()), |_| Ok(()))?;
    sink.put(
        format!("{}/energies.csv", job.id),
        &csv_reports(&tracked.series.reports)?,
    )?;
    let residual = verify_dissipation(&tracked.series)?;
    let mut invariants: Vec<InvariantResult> = linear_invariants(c, &tracked.series)
        .into_iter()
        .map(|mut i| {
            i.name = format!("{}/{}", job.id, i.name);
            i
        })
        .collect();
    invariants.extend(support_invariant(c, tracked.support_excess).map(|mut i| {
        i.name = format!("{}/{}", job.id, i.name);
        i
    }));
    Ok(JobOutput {
        invariants,
        payload: Payload::Residual { dx, residual },
    })
}

fn lifespan_setup(c: &ExperimentConfig) -> Result<LifespanSetup> {
    Ok(LifespanSetup {
        mu0: c.mu0(),
        nonlinearity: c.nonlinearity()?,
        r0: c.r0,
        profile: c.profile()?,
        perturbation: c.perturbation(),
        t_budget: c.t_end(),
        base_dx: c.dx(),
        cfl: c.cfl,
        threshold: c.blowup_threshold,
        max_refinements: c.max_refinements,
        refinement_tol: c.refinement_tol,
    })
}

fn run_lifespan(c: &ExperimentConfig, job: &Job, eps: f64, sink: &mut Sink) -> Result<JobOutput> {
    let record = estimate_lifespan(eps, &lifespan_setup(c)?)?;
    sink.json(format!("{}/record.json", job.id), &record)?;
    Ok(JobOutput {
        invariants: Vec::new(),
        payload: Payload::Record(Box::new(record)),
    })
}

/// Snapshots of `states` at most `max_rows` times as `t, x, u, v`.
fn snapshots_csv<'s>(states: impl Iterator<Item = &'s WaveState<f64>>) -> Result<Vec<u8>> {
    let mut w = CsvWriter::new(Vec::new(), &["t", "x", "u", "v"])?;
    for s in states {
        let g = s.grid();
        for i in 0..g.nx() {
            w.row_f64(&[s.t(), g.x(i), s.u().samples()[i], s.v().samples()[i]])?;
        }
    }
    Ok(w.finish()?)
}

fn run_picard(c: &ExperimentConfig, job: &Job, sink: &mut Sink) -> Result<JobOutput> {
    let solver = solver_config(c)?;
    let grid = grid_for(c, &solver)?;
    let (u0, u1) = initial_data(c, &grid)?;
    let horizon = c.t_end();
    let pc = PicardConfig {
        iterations: c.iterations,
        horizon,
        quad_dt: c.quad_dt(),
        step_budget: c.step_budget,
        mu: c.mu(),
    };
    let result = picard_iterate(&u0, &u1, &solver, &pc)?;
    let direct = run(&u0, &u1, &solver.with_threshold(f64::MAX), &Sampling::Endpoints)?
        .collect_all()
        .0;
    let direct = direct.last().ok_or(Error::NonFinite { t: 0.0 })?;
    let last = result.last().states.last().expect("iterate has states");
    let linear = result.iterates[0].states.last().expect("iterate has states");
    let gap =
        |a: &WaveState<f64>, b: &WaveState<f64>| -> Result<f64> { Ok(a.u().combine(1.0, b.u(), -1.0)?.l2_norm()) };
    let error = gap(direct, last)?;
    let nonlinear_part = gap(direct, linear)?;
    let d_last = result.distances.last().copied().unwrap_or(0.0);
    let tol = c.picard_tol.unwrap_or(0.01 * pc.quad_dt + 10.0 * d_last);

    let ratios = result.ratios();
    let mut invariants: Vec<InvariantResult> = ratios
        .iter()
        .take(3)
        .enumerate()
        .map(|(k, &r)| InvariantResult::at_most(&format!("contraction_ratio_{}", k + 1), r, c.ratio_max))
        .collect();
    if ratios.len() < 3 {
        invariants.push(InvariantResult::flag(
            "contraction_ratios",
            false,
            format!("need iterations >= 4 for three ratios, have {}", ratios.len()),
        ));
    }
    invariants.push(InvariantResult::at_most("direct_match", error, tol));

    let mut summary = result.to_json();
    summary["direct_error_l2"] = json!(error);
    summary["direct_tolerance"] = json!(tol);
    summary["nonlinear_part_l2"] = json!(nonlinear_part);
    summary["quad_dt"] = json!(pc.quad_dt);
    sink.json(format!("{}/picard.json", job.id), &summary)?;

    let mut w = CsvWriter::new(Vec::new(), &["k", "distance", "ratio"])?;
    for (k, &d) in result.distances.iter().enumerate() {
        let r = if k == 0 { f64::NAN } else { ratios[k - 1] };
        w.row(&[k.to_string(), fmt_f64(d), fmt_f64(r)])?;
    }
    sink.put(format!("{}/distances.csv", job.id), &w.finish()?)?;
    let states = &result.last().states;
    let every = (states.len() - 1).div_ceil(10).max(1);
    let picked = states
        .iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0 || i + 1 == states.len())
        .map(|(_, s)| s);
    sink.put(format!("{}/final_iterate.csv", job.id), &snapshots_csv(picked)?)?;
    Ok(JobOutput {
        invariants,
        payload: Payload::None,
    })
}

fn run_simulate(c: &ExperimentConfig, job: &Job, sink: &mut Sink) -> Result<JobOutput> {
    let solver = solver_config(c)?;
    let grid = grid_for(c, &solver)?;
    let (u0, u1) = initial_data(c, &grid)?;
    let dt = solver.dt(&grid);
    let last = solver.steps(&grid);
    let snap_levels: BTreeSet<usize> = sample_levels(&Sampling::Times(c.snapshot_times()), dt, last)
        .into_iter()
        .collect();
    let every = c.sample_every();
    let mut times: Vec<f64> = (0..=last).step_by(every).map(|l| l as f64 * dt).collect();
    times.extend(snap_levels.iter().map(|&l| l as f64 * dt));
    times.push(last as f64 * dt);

    let mut snaps = CsvWriter::new(Vec::new(), &["t", "x", "u", "v"])?;
    let mut sampled = Vec::new();
    let mut final_state = None;
    let tracked = tracked_run(c, &solver, &u0, &u1, &Sampling::Times(times), |s| {
        let level = (s.t() / dt).round() as usize;
        sampled.push(s.t());
        if snap_levels.contains(&level) {
            let g = s.grid();
            for i in 0..g.nx() {
                snaps.row_f64(&[s.t(), g.x(i), s.u().samples()[i], s.v().samples()[i]])?;
            }
        }
        final_state = Some(s.clone());
        Ok(())
    })?;
    sink.put(format!("{}/snapshots.csv", job.id), &snaps.finish()?)?;
    sink.put(
        format!("{}/energies.csv", job.id),
        &csv_reports(&tracked.series.reports)?,
    )?;
    sink.json(
        format!("{}/trajectory.json", job.id),
        &manifest_json(&solver, &grid, &sampled, &tracked.report),
    )?;

    let mut invariants: Vec<InvariantResult> = support_invariant(c, tracked.support_excess).into_iter().collect();
    let mu0 = c.mu0();
    let free =
        mu0 == 0.0 && solver.nonlinearity.is_linear() && c.profile_name() == "bump" && c.perturbation().is_none();
    if let (true, Some(s)) = (free, &final_state) {
        // d'Alembert: u0 splits into two halves leaving nothing behind
        let inner = s.t() - c.r0 - 2.0 * grid.dx();
        if inner > 0.0 {
            let residue = (0..grid.nx())
                .filter(|&i| grid.x(i).abs() <= inner)
                .map(|i| s.u().samples()[i].abs())
                .fold(0.0, f64::max);
            let peak = u0.max_abs();
            invariants.push(InvariantResult::at_most(
                "dalembert_center_residue",
                residue / peak,
                1e-3,
            ));
        }
    }
    if mu0 > 0.0 && tracked.report.termination.is_completed() && c.t_end() >= 20.0 {
        let alpha = decay_alpha(mu0, c.mu());
        let w: Vec<(f64, f64)> = tracked
            .series
            .reports
            .iter()
            .map(|r| (r.t, (1.0 + r.t).powf(alpha) * r.weighted_combo))
            .collect();
        if let Some(&(_, w20)) = w.iter().find(|p| p.0 >= 20.0) {
            let worst = w.iter().filter(|p| p.0 >= 20.0).map(|p| p.1).fold(0.0, f64::max);
            let ratio = if w20 > 0.0 { worst / w20 } else { 1.0 };
            invariants.push(InvariantResult::at_most(
                "weighted_combo_bounded",
                ratio,
                c.growth_factor,
            ));
        }
    }
    Ok(JobOutput {
        invariants,
        payload: Payload::None,
    })
}

/// Runs one job, writing its artifacts below `dir/<job-id>/`.
fn run_job(c: &ExperimentConfig, job: &Job, dir: &Path) -> (Result<JobOutput>, Vec<String>, f64) {
    let start = Instant::now();
    let mut sink = Sink::new(dir);
    let out = match job.task {
        Task::Decay => run_decay(c, job, &mut sink),
        Task::Phi => run_phi(c, job, &mut sink),
        Task::Dissipation { dx, .. } => run_dissipation(c, job, dx, &mut sink),
        Task::Lifespan { eps } => run_lifespan(c, job, eps, &mut sink),
        Task::Picard => run_picard(c, job, &mut sink),
        Task::Simulate => run_simulate(c, job, &mut sink),
    };
    (out, sink.written, start.elapsed().as_secs_f64())
}

fn aggregate_dissipation(
    c: &ExperimentConfig,
    outputs: &[(usize, f64, f64)],
    sink: &mut Sink,
) -> Result<Vec<InvariantResult>> {
    let mut w = CsvWriter::new(Vec::new(), &["level", "dx", "residual", "order"])?;
    let mut orders = Vec::new();
    for (k, &(level, dx, res)) in outputs.iter().enumerate() {
        let order = if k == 0 {
            f64::NAN
        } else {
            (outputs[k - 1].2 / res).log2()
        };
        if k > 0 {
            orders.push(order);
        }
        w.row(&[level.to_string(), fmt_f64(dx), fmt_f64(res), fmt_f64(order)])?;
    }
    sink.put("residuals.csv".into(), &w.finish()?)?;
    let worst_fine = outputs.iter().skip(1).map(|o| o.2).fold(0.0, f64::max);
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![
        InvariantResult::at_most("dissipation_residual", worst_fine, c.residual_tol),
        InvariantResult::at_least("dissipation_order", min_order, c.order_min),
    ])
}

fn aggregate_lifespan(
    c: &ExperimentConfig,
    records: &[LifespanRecord],
    sink: &mut Sink,
) -> Result<Vec<InvariantResult>> {
    sink.put("records.csv".into(), &write_records_csv(records, Vec::new())?)?;
    let mut invariants = Vec::new();
    let mut by_eps: Vec<&LifespanRecord> = records.iter().filter(|r| r.t_num.is_some()).collect();
    by_eps.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let monotone = by_eps.windows(2).all(|w| w[0].t_num > w[1].t_num);
    invariants.push(InvariantResult::flag(
        "lifespan_monotone_in_eps",
        monotone,
        format!("{} uncensored records", by_eps.len()),
    ));
    let p = c.p().unwrap_or(f64::NAN);
    let mu0 = c.mu0();
    if c.kind == ExperimentKind::CriticalProbe {
        match fit_critical(records, p, mu0) {
            Ok(probe) => {
                let mut w = CsvWriter::new(Vec::new(), &["eps", "log_t", "eps_pow"])?;
                for r in &probe.rows {
                    w.row_f64(&[r.eps, r.log_t, r.eps_pow])?;
                }
                sink.put("critical.csv".into(), &w.finish()?)?;
                sink.json("probe.json".into(), &probe)?;
                invariants.push(InvariantResult::at_least(
                    "critical_slope_positive",
                    probe.slope,
                    f64::MIN_POSITIVE,
                ));
                invariants.push(InvariantResult::at_least(
                    "critical_r_squared",
                    probe.r_squared,
                    c.r2_min,
                ));
            }
            Err(e) => invariants.push(InvariantResult::failed("critical_fit", &e)),
        }
    } else if c.is_subcritical() {
        match fit_lifespan(records, p, mu0) {
            Ok(fit) => {
                sink.json("fit.json".into(), &fit)?;
                invariants.push(InvariantResult::at_most("lifespan_exponent", fit.rel_error, c.fit_tol));
            }
            Err(e) => invariants.push(InvariantResult::failed("lifespan_exponent", &e)),
        }
    } else {
        let censored = records.iter().filter(|r| r.censored()).count();
        invariants.push(InvariantResult::flag(
            "supercritical_censored",
            censored == records.len(),
            format!(
                "{censored} of {} records censored at t_end = {}",
                records.len(),
                c.t_end()
            ),
        ));
    }
    Ok(invariants)
}

/// Validates, dispatches every job over a pool of `parallelism` workers and writes the
/// artifacts under `<out_dir>/<name>/`. Results are merged in job order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    let c = config.clone().validated()?;
    let dir = c.out_dir.join(c.name());
    let jobs = plan_jobs(&c);
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.parallelism)
        .build()
        .map_err(|e| Error::param("parallelism", e.to_string()))?;
    let outcomes: Vec<_> = pool.install(|| jobs.par_iter().map(|j| run_job(&c, j, &dir)).collect());

    let mut summaries = Vec::new();
    let mut artifacts = Vec::new();
    let mut invariants = Vec::new();
    let mut residuals = Vec::new();
    let mut records = Vec::new();
    for (job, (out, written, wall)) in jobs.iter().zip(outcomes) {
        artifacts.extend(written.iter().cloned());
        let error = match out {
            Ok(o) => {
                invariants.extend(o.invariants);
                match o.payload {
                    Payload::None => {}
                    Payload::Residual { dx, residual } => {
                        let level = match job.task {
                            Task::Dissipation { level, .. } => level,
                            _ => 0,
                        };
                        residuals.push((level, dx, residual));
                    }
                    Payload::Record(r) => records.push(*r),
                }
                None
            }
            Err(e) => {
                log::error!("{} {}: {e}", c.name(), job.id);
                invariants.push(InvariantResult::failed(&format!("{}/completed", job.id), &e));
                Some(e.to_string())
            }
        };
        summaries.push(JobSummary {
            id: job.id.clone(),
            task: job.task.clone(),
            artifacts: written,
            wall_time_s: wall,
            error,
        });
    }

    let mut sink = Sink::new(&dir);
    let jobs_ok = summaries.iter().all(|s| s.error.is_none());
    match c.kind {
        ExperimentKind::Dissipation if jobs_ok => invariants.extend(aggregate_dissipation(&c, &residuals, &mut sink)?),
        ExperimentKind::LifespanSweep | ExperimentKind::CriticalProbe => {
            invariants.extend(aggregate_lifespan(&c, &records, &mut sink)?)
        }
        _ => {}
    }
    sink.put("config.toml".into(), c.to_toml().as_bytes())?;
    artifacts.extend(sink.written);

    let passed = invariants.iter().all(|i| i.passed);
    let manifest = Manifest {
        experiment: c.name(),
        kind: c.kind,
        directory: dir.clone(),
        config: c,
        jobs: summaries,
        artifacts,
        invariants,
        passed,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}
