use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Scalar;

use super::{Leapfrog, OracleRk, Scheme, SolverConfig, WaveState};

/// Either scheme behind one interface.
#[derive(Debug, Clone)]
pub enum Simulation<T> {
    Leapfrog(Leapfrog<T>),
    OracleRk(OracleRk<T>),
}

impl<T: Scalar> Simulation<T> {
    pub fn new(u0: &Field<T>, u1: &Field<T>, config: &SolverConfig<T>) -> Result<Self> {
        Ok(match config.scheme {
            Scheme::Leapfrog => Simulation::Leapfrog(Leapfrog::new(u0, u1, config)?),
            Scheme::OracleRk => Simulation::OracleRk(OracleRk::new(u0, u1, config)?),
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        match self {
            Simulation::Leapfrog(s) => s.grid(),
            Simulation::OracleRk(s) => s.grid(),
        }
    }

    pub fn dt(&self) -> T {
        match self {
            Simulation::Leapfrog(s) => s.dt(),
            Simulation::OracleRk(s) => s.dt(),
        }
    }

    pub fn level(&self) -> usize {
        match self {
            Simulation::Leapfrog(s) => s.level(),
            Simulation::OracleRk(s) => s.level(),
        }
    }

    pub fn t(&self) -> T {
        T::from_usize_lossy(self.level()) * self.dt()
    }

    pub fn max_abs_v(&self) -> T {
        match self {
            Simulation::Leapfrog(s) => s.max_abs_v(),
            Simulation::OracleRk(s) => s.max_abs_v(),
        }
    }

    pub fn state(&self) -> WaveState<T> {
        match self {
            Simulation::Leapfrog(s) => s.state(),
            Simulation::OracleRk(s) => s.state(),
        }
    }

    pub fn advance(&mut self) -> Result<T> {
        match self {
            Simulation::Leapfrog(s) => s.advance(),
            Simulation::OracleRk(s) => s.advance(),
        }
    }
}

/// Which levels a trajectory yields. Level 0 is always included.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling<T> {
    /// Only the initial and final levels.
    Endpoints,
    /// Every `k`-th level, plus the final one.
    Every(usize),
    /// The levels nearest to the given times.
    Times(Vec<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination<T> {
    Completed,
    /// First level whose `max |u_t|` exceeded the threshold or was not finite.
    BlowupDetected(T),
}

impl<T: Scalar> Termination<T> {
    pub fn blowup_time(&self) -> Option<T> {
        match *self {
            Termination::BlowupDetected(t) => Some(t),
            Termination::Completed => None,
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunReport<T> {
    pub termination: Termination<T>,
    pub dt: T,
    /// Last level reached, including a blow-up level.
    pub final_level: usize,
    pub final_t: T,
    /// Largest finite `max |u_t|` over the visited levels.
    pub peak_abs_v: T,
}

/// Lazily advanced run yielding the sampled states in time order.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    sim: Simulation<T>,
    threshold: T,
    levels: Vec<usize>,
    cursor: usize,
    last_level: usize,
    termination: Option<Termination<T>>,
    peak: T,
}

pub fn sample_levels<T: Scalar>(sampling: &Sampling<T>, dt: T, last: usize) -> Vec<usize> {
    let mut levels = match sampling {
        Sampling::Endpoints => vec![0, last],
        Sampling::Every(k) => {
            let k = (*k).max(1);
            let mut l: Vec<usize> = (0..=last).step_by(k).collect();
            l.push(last);
            l
        }
        Sampling::Times(ts) => {
            let mut l = vec![0];
            l.extend(
                ts.iter()
                    .filter(|t| t.is_finite() && **t >= T::zero())
                    .map(|&t| (t / dt).round().to_usize().unwrap_or(0).min(last)),
            );
            l
        }
    };
    levels.sort_unstable();
    levels.dedup();
    levels
}

/// Starts a run; states are produced on iteration.
pub fn run<T: Scalar>(
    u0: &Field<T>,
    u1: &Field<T>,
    config: &SolverConfig<T>,
    sampling: &Sampling<T>,
) -> Result<Trajectory<T>> {
    let sim = Simulation::new(u0, u1, config)?;
    let last = config.steps(sim.grid());
    let levels = sample_levels(sampling, sim.dt(), last);
    let peak = sim.max_abs_v();
    let termination = (!(peak <= config.blowup_threshold)).then_some(Termination::BlowupDetected(T::zero()));
    Ok(Trajectory {
        sim,
        threshold: config.blowup_threshold,
        levels,
        cursor: 0,
        last_level: last,
        termination,
        peak: if peak.is_finite() { peak } else { T::zero() },
    })
}

impl<T: Scalar> Trajectory<T> {
    pub fn dt(&self) -> T {
        self.sim.dt()
    }

    pub fn grid(&self) -> &Grid<T> {
        self.sim.grid()
    }

    /// Sample times still to be produced, in order.
    pub fn pending_times(&self) -> Vec<T> {
        self.levels[self.cursor..]
            .iter()
            .map(|&l| T::from_usize_lossy(l) * self.dt())
            .collect()
    }

    fn step(&mut self) -> bool {
        match self.sim.advance() {
            Ok(m) if m <= self.threshold => {
                self.peak = self.peak.max(m);
                true
            }
            Ok(_) | Err(Error::NonFinite { .. }) => {
                self.termination = Some(Termination::BlowupDetected(self.sim.t()));
                false
            }
            Err(_) => unreachable!("advance only fails on non-finite values"),
        }
    }

    /// Runs to the end without producing further states.
    pub fn finish(mut self) -> RunReport<T> {
        while self.termination.is_none() && self.sim.level() < self.last_level {
            self.step();
        }
        self.report()
    }

    fn report(&self) -> RunReport<T> {
        RunReport {
            termination: self.termination.unwrap_or(Termination::Completed),
            dt: self.sim.dt(),
            final_level: self.sim.level(),
            final_t: self.sim.t(),
            peak_abs_v: self.peak,
        }
    }

    /// Collects the remaining states and the final report.
    pub fn collect_all(mut self) -> (Vec<WaveState<T>>, RunReport<T>) {
        let states: Vec<WaveState<T>> = self.by_ref().collect();
        (states, self.finish())
    }
}

impl<T: Scalar> Iterator for Trajectory<T> {
    type Item = WaveState<T>;

    fn next(&mut self) -> Option<WaveState<T>> {
        if self.termination.is_some() {
            return None;
        }
        let &target = self.levels.get(self.cursor)?;
        while self.sim.level() < target {
            if !self.step() {
                return None;
            }
        }
        self.cursor += 1;
        Some(self.sim.state())
    }
}

/// Runs to completion, handing each sampled state to `observe`.
pub fn run_with<T: Scalar>(
    u0: &Field<T>,
    u1: &Field<T>,
    config: &SolverConfig<T>,
    sampling: &Sampling<T>,
    mut observe: impl FnMut(&WaveState<T>),
) -> Result<RunReport<T>> {
    let mut traj = run(u0, u1, config, sampling)?;
    for s in traj.by_ref() {
        observe(&s);
    }
    Ok(traj.finish())
}

/// Trajectory manifest: config echo, sample times and termination.
pub fn manifest_json<T: Scalar>(
    config: &SolverConfig<T>,
    grid: &Grid<T>,
    sample_times: &[T],
    report: &RunReport<T>,
) -> Value {
    let termination = match report.termination {
        Termination::Completed => json!({ "kind": "completed" }),
        Termination::BlowupDetected(t) => json!({ "kind": "blowup_detected", "t": t.as_f64() }),
    };
    json!({
        "config": {
            "cfl": config.cfl.as_f64(),
            "scheme": config.scheme,
            "t_end": config.t_end.as_f64(),
            "blowup_threshold": config.blowup_threshold.as_f64(),
            "mu0": config.mu0.as_f64(),
            "nonlinearity": config.nonlinearity,
            "r0": config.r0.as_f64(),
            "corrector": config.corrector,
        },
        "grid": {
            "half_width": grid.half_width().as_f64(),
            "nx": grid.nx(),
            "dx": grid.dx().as_f64(),
        },
        "dt": report.dt.as_f64(),
        "sample_times": sample_times.iter().map(|t| t.as_f64()).collect::<Vec<_>>(),
        "termination": termination,
        "final_t": report.final_t.as_f64(),
        "peak_abs_v": report.peak_abs_v.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavesolver::{make_initial_data, Nonlinearity, Profile};

    #[test]
    fn sampling_levels() {
        assert_eq!(sample_levels(&Sampling::<f64>::Endpoints, 0.1, 10), vec![0, 10]);
        assert_eq!(sample_levels(&Sampling::<f64>::Every(4), 0.1, 10), vec![0, 4, 8, 10]);
        assert_eq!(
            sample_levels(&Sampling::Times(vec![0.26, 0.31, 5.0]), 0.1, 10),
            vec![0, 3, 10]
        );
    }

    #[test]
    fn linear_run_completes() {
        let c = SolverConfig::<f64>::linear(1.0, 1.0, 5.0);
        let g = c.grid_for(0.05).unwrap();
        let (u0, u1) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
        let (states, report) = run(&u0, &u1, &c, &Sampling::Every(10)).unwrap().collect_all();
        assert!(report.termination.is_completed());
        assert_eq!(report.final_level, 100);
        assert_eq!(states.len(), 11);
        assert!((states.last().unwrap().t() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn large_data_blows_up() {
        let c = SolverConfig::new(0.5, Nonlinearity::AbsP { p: 2.0 }, 1.0, 50.0);
        let g = c.grid_for(0.0625).unwrap();
        let (u0, u1) = make_initial_data(&Profile::VelocityBump, 1.0, 2.0, &g).unwrap();
        let report = run(&u0, &u1, &c, &Sampling::Endpoints).unwrap().finish();
        let t = report.termination.blowup_time().expect("must blow up");
        assert!(t > 0.0 && t < 50.0);
        assert!(report.peak_abs_v <= 1e8);
    }

    #[test]
    fn manifest_has_termination() {
        let c = SolverConfig::linear(0.0, 1.0, 1.0);
        let g = c.grid_for(0.1).unwrap();
        let report = run(&g.zeros(), &g.zeros(), &c, &Sampling::Endpoints).unwrap().finish();
        let m = manifest_json(&c, &g, &[0.0, 1.0], &report);
        assert_eq!(m["termination"]["kind"], "completed");
        assert_eq!(m["config"]["scheme"], "leapfrog");
        assert_eq!(m["config"]["nonlinearity"]["kind"], "none");
    }
}
