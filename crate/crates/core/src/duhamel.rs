//! Linear propagators `R(t, s0)`, `S(t, s0)` and the Picard map
//! `Phi(u)(t) = R(t)(u0, u1) + \int_0^t S(t, s) f(u_t(s), u_x(s)) ds`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::energetics::{compute_report, decay_alpha};
use crate::error::{Error, Result};
use crate::grid::{central_diff, l2_norm, second_diff, Field, Grid};
use crate::scalar::Scalar;
use crate::wavesolver::{run, support_radius, Leapfrog, Nonlinearity, Sampling, Scheme, SolverConfig, WaveState};

/// Source-time panels per propagation chunk; fixed so that sums do not depend on threads.
const CHUNK: usize = 4;
/// Default ceiling on leapfrog steps spent in one Duhamel integral.
pub const DEFAULT_STEP_BUDGET: u64 = 50_000_000;

fn linear_config<T: Scalar>(config: &SolverConfig<T>, r0: T, span: T) -> SolverConfig<T> {
    SolverConfig {
        nonlinearity: Nonlinearity::None,
        scheme: Scheme::Leapfrog,
        t_end: span,
        r0,
        ..*config
    }
}

/// Support radius used for containment: the measured support, never below one cell.
fn data_radius<T: Scalar>(g: &Field<T>, h: &Field<T>) -> Result<T> {
    let s = WaveState::new(g.clone(), h.clone(), T::zero())?;
    Ok(support_radius(&s, T::zero()).max(g.grid().dx()))
}

/// `R(t, s0)(g, h)`: the linear solution at `t` of data `(g, h)` given at `s0`.
///
/// `config` supplies `mu0`, `cfl` and the original support radius `R0`; the data must
/// vanish outside `|x| <= R0 + s0` (up to the two cells of the discrete cone).
/// The propagation runs for the nearest whole number of steps to `t - s0`.
pub fn propagate_homogeneous<T: Scalar>(
    g: &Field<T>,
    h: &Field<T>,
    s0: T,
    t: T,
    config: &SolverConfig<T>,
) -> Result<WaveState<T>> {
    if !(t >= s0) {
        return Err(Error::TimeOrder {
            s0: s0.as_f64(),
            t: t.as_f64(),
        });
    }
    if !(s0 >= T::zero()) {
        return Err(Error::param("s0", format!("must be >= 0, got {s0}")));
    }
    let grid = *g.grid();
    let rad = data_radius(g, h)?;
    let allowed = config.r0 + s0 + T::lit(2.0) * grid.dx();
    if rad > allowed {
        return Err(Error::DataSupport {
            radius: (config.r0 + s0).as_f64(),
        });
    }
    let cfg = linear_config(config, rad, t - s0);
    let mut traj = run(g, h, &cfg, &Sampling::Endpoints)?;
    let end = traj.by_ref().last().expect("level 0 is always produced");
    let span = end.t();
    let (u, v) = end.into_fields();
    WaveState::new(u, v, s0 + span)
}

/// `S(t, s0) k = R(t, s0)(0, k)`.
pub fn propagate_source<T: Scalar>(k: &Field<T>, s0: T, t: T, config: &SolverConfig<T>) -> Result<WaveState<T>> {
    propagate_homogeneous(&k.grid().zeros(), k, s0, t, config)
}

/// `sup_t (1+t)^{alpha/2} [(1+t)^{-1}|w| + |w_x|_{H^1} + |w_t|_{H^1} + |w_tt|]` over samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNorm {
    pub value: f64,
    pub alpha: f64,
    pub horizon: f64,
    /// Radius of a ball in `X(T)` the norm is compared against, when one is attached.
    pub radius: Option<f64>,
}

impl WeightedNorm {
    pub fn within(&self) -> Option<bool> {
        self.radius.map(|m| self.value <= m)
    }
}

/// Weighted bracket at one time; `utt` supplied by the caller.
pub fn weighted_bracket<T: Scalar>(u: &[T], v: &[T], utt: &[T], t: T, alpha: T, dx: T) -> T {
    let ux = central_diff(u, dx);
    let uxx = second_diff(u, dx);
    let vx = central_diff(v, dx);
    let n = |w: &[T]| l2_norm(w, dx);
    let h1 = |a: &[T], b: &[T]| (n(a).powi(2) + n(b).powi(2)).sqrt();
    let tp1 = T::one() + t;
    tp1.powf(alpha * T::lit(0.5)) * (n(u) / tp1 + h1(&ux, &uxx) + h1(v, &vx) + n(utt))
}

/// `u_tt = D2 u - V u_t + src`.
fn reconstruct_utt<T: Scalar>(u: &[T], v: &[T], src: Option<&[T]>, pot: &[T], dx: T) -> Vec<T> {
    let d2 = second_diff(u, dx);
    let n = u.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                T::zero()
            } else {
                d2[i] - pot[i] * v[i] + src.map_or(T::zero(), |s| s[i])
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig<T> {
    /// Number of applications of the map; iterates `0..=iterations` are produced.
    pub iterations: usize,
    pub horizon: T,
    /// Panel width of the rectangle rule; a whole multiple of the solver step.
    pub quad_dt: T,
    pub step_budget: u64,
    pub mu: T,
}

/// One iterate sampled at `s_i = i quad_dt`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardIterate<T> {
    pub states: Vec<WaveState<T>>,
    /// Source that produced this iterate (`None` for the linear part).
    pub forcing: Option<Vec<Vec<T>>>,
    pub norm: WeightedNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult<T> {
    pub times: Vec<T>,
    pub iterates: Vec<PicardIterate<T>>,
    /// `d_k = |Phi^{k+1} u - Phi^k u|_{X(T)}`.
    pub distances: Vec<f64>,
    pub alpha: f64,
    pub steps_used: u64,
}

impl<T: Scalar> PicardResult<T> {
    pub fn ratios(&self) -> Vec<f64> {
        self.distances
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }

    pub fn last(&self) -> &PicardIterate<T> {
        self.iterates.last().expect("at least the linear iterate")
    }

    pub fn to_json(&self) -> Value {
        json!({
            "alpha": self.alpha,
            "times": self.times.iter().map(|t| t.as_f64()).collect::<Vec<_>>(),
            "distances": self.distances,
            "ratios": self.ratios(),
            "norms": self.iterates.iter().map(|it| it.norm).collect::<Vec<_>>(),
            "steps_used": self.steps_used,
        })
    }

    /// CSV `t, x, u, v` of one iterate.
    pub fn write_iterate_csv<W: Write>(&self, k: usize, out: W) -> io::Result<W> {
        let mut w = crate::io::CsvWriter::new(out, &["t", "x", "u", "v"])?;
        for s in &self.iterates[k].states {
            let g = s.grid();
            for i in 0..g.nx() {
                w.row_f64(&[
                    s.t().as_f64(),
                    g.x(i).as_f64(),
                    s.u().samples()[i].as_f64(),
                    s.v().samples()[i].as_f64(),
                ])?;
            }
        }
        w.finish()
    }
}

struct Plan<T> {
    grid: Grid<T>,
    m: usize,
    panels: usize,
    pot: Vec<T>,
    alpha: T,
}

/// Smallest grid with spacing `dx` that holds every propagation of a Picard run.
pub fn picard_grid<T: Scalar>(solver: &SolverConfig<T>, horizon: T, dx: T) -> Result<Grid<T>> {
    linear_config(solver, solver.r0 + T::lit(2.0) * dx, horizon).grid_for(dx)
}

/// Leapfrog steps needed by one Duhamel integral over `panels` source times.
pub fn duhamel_steps(panels: usize, m: usize) -> u64 {
    (panels as u64) * (panels as u64 + 1) / 2 * m as u64
}

/// Picard iteration for data `(u0, u1)` with the nonlinearity of `solver`.
///
/// `S(t_i, s_j)` is a homogeneous leapfrog run from `s_j` with data `(0, f_j)`; the
/// integral is the left-endpoint rectangle rule over `s_j = j quad_dt`.
pub fn picard_iterate<T: Scalar>(
    u0: &Field<T>,
    u1: &Field<T>,
    solver: &SolverConfig<T>,
    picard: &PicardConfig<T>,
) -> Result<PicardResult<T>> {
    if picard.iterations == 0 {
        return Err(Error::param("K", "need at least one iteration"));
    }
    let grid = *u0.grid();
    let dt = solver.dt(&grid);
    let ratio = picard.quad_dt / dt;
    let m = ratio.round().to_usize().unwrap_or(0);
    if m == 0 || (ratio - T::from_usize_lossy(m)).abs() > T::lit(1e-9) * ratio {
        return Err(Error::param(
            "quad_dt",
            format!("must be a whole multiple of dt = {dt}, got {}", picard.quad_dt),
        ));
    }
    let panels_f = picard.horizon / picard.quad_dt;
    let panels = panels_f.round().to_usize().unwrap_or(0);
    if panels == 0 || (panels_f - T::from_usize_lossy(panels)).abs() > T::lit(1e-9) * panels_f {
        return Err(Error::param(
            "T",
            "horizon must be a positive whole multiple of quad_dt",
        ));
    }
    let per_integral = duhamel_steps(panels, m);
    let total = per_integral * picard.iterations as u64;
    if total > picard.step_budget {
        return Err(Error::Budget(format!(
            "{} iterations x {} panels need {total} propagation steps, budget {}",
            picard.iterations, panels, picard.step_budget
        )));
    }
    let lin = linear_config(solver, solver.r0, picard.horizon);
    // sources at s_j reach one cell past the cone, and their velocities one more
    linear_config(solver, solver.r0 + T::lit(2.0) * grid.dx(), picard.horizon).validate(&grid)?;
    let params = solver.potential()?;
    let alpha = decay_alpha(solver.mu0, picard.mu);
    let plan = Plan {
        grid,
        m,
        panels,
        pot: params.sample(&grid.nodes()),
        alpha,
    };

    // iterate 0: R(t)(u0, u1) sampled every m levels
    let states: Vec<WaveState<T>> = run(u0, u1, &lin, &Sampling::Every(m))?.collect();
    debug_assert_eq!(states.len(), panels + 1);
    let times: Vec<T> = states.iter().map(|s| s.t()).collect();
    let linear = states;
    let mut iterates = vec![PicardIterate {
        norm: norm_of(&plan, &linear, None, picard.horizon),
        states: linear.clone(),
        forcing: None,
    }];
    let f = solver.nonlinearity.evaluator::<T>();
    let dx = grid.dx();

    for _ in 0..picard.iterations {
        let prev = iterates.last().unwrap();
        let forcing: Vec<Vec<T>> = prev
            .states
            .iter()
            .map(|s| {
                let ux = central_diff(s.u().samples(), dx);
                s.v().samples().iter().zip(&ux).map(|(&v, &d)| f.eval(v, d)).collect()
            })
            .collect();
        let duh = duhamel_integral(&plan, &forcing[..panels], solver, picard.quad_dt)?;
        let states = linear
            .iter()
            .zip(&duh)
            .map(|(l, (du, dv))| {
                let u = l.u().samples().iter().zip(du).map(|(&a, &b)| a + b).collect();
                let v = l.v().samples().iter().zip(dv).map(|(&a, &b)| a + b).collect();
                WaveState::new(Field::from_samples(grid, u)?, Field::from_samples(grid, v)?, l.t())
            })
            .collect::<Result<Vec<_>>>()?;
        let norm = norm_of(&plan, &states, Some(&forcing), picard.horizon);
        iterates.push(PicardIterate {
            states,
            forcing: Some(forcing),
            norm,
        });
    }

    let distances = (0..picard.iterations)
        .map(|k| distance(&plan, &iterates[k], &iterates[k + 1]).as_f64())
        .collect();
    Ok(PicardResult {
        times,
        iterates,
        distances,
        alpha: alpha.as_f64(),
        steps_used: total,
    })
}

fn norm_of<T: Scalar>(
    plan: &Plan<T>,
    states: &[WaveState<T>],
    forcing: Option<&Vec<Vec<T>>>,
    horizon: T,
) -> WeightedNorm {
    let dx = plan.grid.dx();
    let value = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (u, v) = (s.u().samples(), s.v().samples());
            let utt = reconstruct_utt(u, v, forcing.map(|f| f[i].as_slice()), &plan.pot, dx);
            weighted_bracket(u, v, &utt, s.t(), plan.alpha, dx)
        })
        .fold(T::zero(), T::max);
    WeightedNorm {
        value: value.as_f64(),
        alpha: plan.alpha.as_f64(),
        horizon: horizon.as_f64(),
        radius: None,
    }
}

fn distance<T: Scalar>(plan: &Plan<T>, a: &PicardIterate<T>, b: &PicardIterate<T>) -> T {
    let dx = plan.grid.dx();
    let mut sup = T::zero();
    for (i, (sa, sb)) in a.states.iter().zip(&b.states).enumerate() {
        let du: Vec<T> = sb
            .u()
            .samples()
            .iter()
            .zip(sa.u().samples())
            .map(|(&x, &y)| x - y)
            .collect();
        let dv: Vec<T> = sb
            .v()
            .samples()
            .iter()
            .zip(sa.v().samples())
            .map(|(&x, &y)| x - y)
            .collect();
        let src = |it: &PicardIterate<T>, k: usize| it.forcing.as_ref().map(|f| f[i][k]).unwrap_or(T::zero());
        let dsrc: Vec<T> = (0..du.len()).map(|k| src(b, k) - src(a, k)).collect();
        let utt = reconstruct_utt(&du, &dv, Some(&dsrc), &plan.pot, dx);
        sup = sup.max(weighted_bracket(&du, &dv, &utt, sa.t(), plan.alpha, dx));
    }
    sup
}

/// `quad_dt sum_{j < i} S(t_i, s_j) f_j` for `i = 0..=N`, as `(u, v)` sample vectors.
type Samples<T> = Vec<(Vec<T>, Vec<T>)>;

fn duhamel_integral<T: Scalar>(
    plan: &Plan<T>,
    forcing: &[Vec<T>],
    solver: &SolverConfig<T>,
    quad_dt: T,
) -> Result<Samples<T>> {
    let n = plan.grid.nx();
    let panels = plan.panels;
    let zero_acc = || vec![(vec![T::zero(); n], vec![T::zero(); n]); panels + 1];
    let sources: Vec<usize> = (0..panels).collect();
    let partials: Vec<Result<Samples<T>>> = sources
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = zero_acc();
            for &j in chunk {
                let f = &forcing[j];
                if f.iter().all(|&x| x == T::zero()) {
                    continue;
                }
                let k = Field::from_samples(plan.grid, f.clone())?;
                let remaining = T::from_usize_lossy((panels - j) * plan.m) * solver.dt(&plan.grid);
                let rad = data_radius(&plan.grid.zeros(), &k)?;
                let cfg = linear_config(solver, rad, remaining);
                let mut lf = Leapfrog::new(&plan.grid.zeros(), &k, &cfg)?;
                for (au, av) in acc.iter_mut().skip(j + 1) {
                    for _ in 0..plan.m {
                        lf.advance()?;
                    }
                    let (u, v) = (lf.state().into_fields().0, lf.velocity());
                    for (a, &b) in au.iter_mut().zip(u.samples()) {
                        *a += quad_dt * b;
                    }
                    for (a, &b) in av.iter_mut().zip(&v) {
                        *a += quad_dt * b;
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = zero_acc();
    for part in partials {
        for ((tu, tv), (pu, pv)) in total.iter_mut().zip(part?) {
            tu.iter_mut().zip(&pu).for_each(|(a, &b)| *a += b);
            tv.iter_mut().zip(&pv).for_each(|(a, &b)| *a += b);
        }
    }
    Ok(total)
}

/// `max_t [combo(t) / combo(s0)] / ((1+s0)/(1+t))^alpha` for the linear evolution of
/// `(g, h)` from `s0` over `[s0, s0 + span]`, sampled every `every` steps.
pub fn homogeneous_decay_ratio<T: Scalar>(
    g: &Field<T>,
    h: &Field<T>,
    s0: T,
    span: T,
    config: &SolverConfig<T>,
    mu: T,
    every: usize,
) -> Result<f64> {
    let rad = data_radius(g, h)?;
    let cfg = linear_config(config, rad, span);
    let params = cfg.potential()?;
    let alpha = decay_alpha(cfg.mu0, mu);
    let a = T::lit(1.25);
    let mut base = None;
    let mut worst = T::zero();
    let mut failure = None;
    let mut traj = run(g, h, &cfg, &Sampling::Every(every))?;
    for s in traj.by_ref() {
        let t = s0 + s.t();
        let shifted = WaveState::new(s.u().clone(), s.v().clone(), t)?;
        match compute_report(&shifted, &params, a, mu) {
            Ok(r) => {
                let c0 = *base.get_or_insert(r.weighted_combo);
                if c0 > T::zero() {
                    let rate = ((T::one() + s0) / (T::one() + t)).powf(alpha);
                    worst = worst.max(r.weighted_combo / c0 / rate);
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(worst.as_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavesolver::{make_initial_data, Profile};

    fn cfg(mu0: f64, t_end: f64) -> SolverConfig<f64> {
        SolverConfig::linear(mu0, 1.0, t_end)
    }

    #[test]
    fn identity_at_initial_time() {
        let c = cfg(1.0, 5.0);
        let g = c.grid_for(0.1).unwrap();
        let (u0, u1) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
        let s = propagate_homogeneous(&u0, &u1, 2.0, 2.0, &c).unwrap();
        assert_eq!(s.u(), &u0);
        assert_eq!(s.v(), &u1);
        assert_eq!(s.t(), 2.0);
    }

    #[test]
    fn zero_data_and_time_order() {
        let c = cfg(1.0, 5.0);
        let g = c.grid_for(0.1).unwrap();
        let z = propagate_homogeneous(&g.zeros(), &g.zeros(), 0.0, 3.0, &c).unwrap();
        assert_eq!(z.u().max_abs(), 0.0);
        assert!(matches!(
            propagate_homogeneous(&g.zeros(), &g.zeros(), 2.0, 1.0, &c),
            Err(Error::TimeOrder { .. })
        ));
    }

    #[test]
    fn rejects_data_outside_cone() {
        let c = cfg(1.0, 5.0);
        let g = c.grid_for(0.1).unwrap();
        let wide = g.sample(|x: f64| if x.abs() < 3.0 { 1.0 } else { 0.0 });
        assert!(matches!(
            propagate_homogeneous(&g.zeros(), &wide, 0.5, 1.0, &c),
            Err(Error::DataSupport { .. })
        ));
    }

    #[test]
    fn budget_guard() {
        let c = SolverConfig::new(0.5, Nonlinearity::AbsP { p: 6.0 }, 1.0, 20.0);
        let g = picard_grid(&c, 20.0, 0.0625).unwrap();
        let (u0, u1) = make_initial_data(&Profile::VelocityBump, 1.0, 0.1, &g).unwrap();
        let p = PicardConfig {
            iterations: 5,
            horizon: 20.0,
            quad_dt: 0.0625,
            step_budget: 1000,
            mu: 0.495,
        };
        assert!(matches!(picard_iterate(&u0, &u1, &c, &p), Err(Error::Budget(_))));
        let p = PicardConfig {
            quad_dt: 0.1,
            step_budget: u64::MAX,
            ..p
        };
        assert!(picard_iterate(&u0, &u1, &c, &p).is_err());
    }

    #[test]
    fn zero_data_gives_zero_iterates() {
        let c = SolverConfig::new(0.5, Nonlinearity::AbsP { p: 6.0 }, 1.0, 4.0);
        let g = picard_grid(&c, 4.0, 0.125).unwrap();
        let p = PicardConfig {
            iterations: 3,
            horizon: 4.0,
            quad_dt: 0.25,
            step_budget: u64::MAX,
            mu: 0.495,
        };
        let r = picard_iterate(&g.zeros(), &g.zeros(), &c, &p).unwrap();
        assert_eq!(r.distances, vec![0.0; 3]);
        assert!(r.iterates.iter().all(|it| it.norm.value == 0.0));
    }
}
