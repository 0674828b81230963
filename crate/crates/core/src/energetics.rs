//! Energy functionals on a [`WaveState`], discrete dissipation and equivalence checks,
//! and power-law decay fits.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{central_diff, second_diff, Field};
use crate::io::CsvWriter;
use crate::potential::PotentialParams;
use crate::scalar::{linear_regression, trapezoid, Scalar};
use crate::wavesolver::{run_with, Nonlinearity, RunReport, Sampling, SolverConfig, WaveState};

/// Default fit window for decay exponents.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (20.0, 400.0);
/// Minimum number of samples inside a fit window.
pub const MIN_FIT_POINTS: usize = 10;
/// Relative slack allowed in the monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// `A = max(5/4, (1 + R0) / (2 mu0))`.
pub fn default_a<T: Scalar>(mu0: T, r0: T) -> T {
    T::lit(1.25).max((T::one() + r0) / (T::lit(2.0) * mu0))
}

/// `mu = 0.99 mu0` for `mu0 <= 1`; `0.99` otherwise (unused by the `mu0 > 1` bounds).
pub fn default_mu<T: Scalar>(mu0: T) -> T {
    T::lit(0.99) * mu0.min(T::one())
}

/// Decay exponent of the squared norms: `mu` when `mu0 <= 1`, 1 otherwise.
pub fn decay_alpha<T: Scalar>(mu0: T, mu: T) -> T {
    if mu0 <= T::one() {
        mu
    } else {
        T::one()
    }
}

/// `t0 = mu R0 / (mu0 - mu)`.
pub fn threshold_t0<T: Scalar>(mu0: T, mu: T, r0: T) -> T {
    mu * r0 / (mu0 - mu)
}

/// `t1 = R0 / (mu0 - 1)`.
pub fn threshold_t1<T: Scalar>(mu0: T, r0: T) -> T {
    r0 / (mu0 - T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport<T> {
    pub t: T,
    pub a: T,
    pub mu: T,
    /// `1/2 (|u_x|^2 + |u_t|^2)`
    pub e0: T,
    /// `\int u u_t + u^2 / (2(t+1)) + V u^2 / 2`
    pub i_func: T,
    /// `A E0 + I / (2(t+1))`
    pub f_a: T,
    /// `\int u u_t + (1 - mu) u^2 / (2(t+1)) + V u^2 / 2`
    pub e1: T,
    /// `E0 + mu E1 / (2(t+1))`
    pub e2: T,
    /// `\int u u_t + V u^2 / 2`
    pub e3: T,
    /// `E0 + E3 / (2(t+1))`
    pub e4: T,
    pub norm_u_l2: T,
    pub norm_ux_l2: T,
    pub norm_ut_l2: T,
    pub norm_sqrtv_u_l2: T,
    /// `|u|^2/(1+t)^2 + |sqrt(V) u|^2/(1+t) + |u_t|^2 + |u_x|^2`
    pub weighted_combo: T,
    /// `\int V u_t^2`, the dissipation rate of `E0`.
    pub damping: T,
    /// `|sqrt(V) u_t|^2/(1+t) + |u_tt|^2 + |u_xt|^2 + |u_xx|^2` with `u_tt` from the equation.
    pub derivative_combo: T,
}

fn check_a_mu<T: Scalar>(params: &PotentialParams<T>, a: T, mu: T) -> Result<()> {
    if !(a > T::zero()) || !a.is_finite() {
        return Err(Error::param("A", format!("must be positive, got {a}")));
    }
    let mu0 = params.mu0();
    if mu0 > T::zero() && mu0 <= T::one() && !(mu > T::zero() && mu < mu0) {
        return Err(Error::param(
            "mu",
            format!("must lie in (0, mu0) = (0, {mu0}), got {mu}"),
        ));
    }
    if !mu.is_finite() {
        return Err(Error::param("mu", "must be finite"));
    }
    Ok(())
}

/// Functionals of a linear state (`f = 0` in the reconstructed `u_tt`).
pub fn compute_report<T: Scalar>(
    state: &WaveState<T>,
    params: &PotentialParams<T>,
    a: T,
    mu: T,
) -> Result<EnergyReport<T>> {
    compute_report_with(state, params, a, mu, &Nonlinearity::None)
}

pub fn compute_report_with<T: Scalar>(
    state: &WaveState<T>,
    params: &PotentialParams<T>,
    a: T,
    mu: T,
    nonlinearity: &Nonlinearity,
) -> Result<EnergyReport<T>> {
    check_a_mu(params, a, mu)?;
    let grid = state.grid();
    let dx = grid.dx();
    let t = state.t();
    let (u, v) = (state.u().samples(), state.v().samples());
    let ux = central_diff(u, dx);
    let vx = central_diff(v, dx);
    let uxx = second_diff(u, dx);
    let utt = state.acceleration(params, nonlinearity);
    let pot = params.sample(&grid.nodes());
    let n = grid.nx();
    let integral = |g: &dyn Fn(usize) -> T| trapezoid(&(0..n).map(g).collect::<Vec<T>>(), dx);

    let uu = integral(&|i| u[i] * u[i]);
    let uv = integral(&|i| u[i] * v[i]);
    let vv = integral(&|i| v[i] * v[i]);
    let xx = integral(&|i| ux[i] * ux[i]);
    let vuu = integral(&|i| pot[i] * u[i] * u[i]);
    let vvv = integral(&|i| pot[i] * v[i] * v[i]);
    let tt = integral(&|i| utt[i] * utt[i]);
    let xt = integral(&|i| vx[i] * vx[i]);
    let x2 = integral(&|i| uxx[i] * uxx[i]);

    let half = T::lit(0.5);
    let tp1 = t + T::one();
    let w = T::one() / (T::lit(2.0) * tp1);
    let e0 = half * (xx + vv);
    let i_func = uv + w * uu + half * vuu;
    let e1 = uv + (T::one() - mu) * w * uu + half * vuu;
    let e3 = uv + half * vuu;
    Ok(EnergyReport {
        t,
        a,
        mu,
        e0,
        i_func,
        f_a: a * e0 + w * i_func,
        e1,
        e2: e0 + mu * w * e1,
        e3,
        e4: e0 + w * e3,
        norm_u_l2: uu.sqrt(),
        norm_ux_l2: xx.sqrt(),
        norm_ut_l2: vv.sqrt(),
        norm_sqrtv_u_l2: vuu.sqrt(),
        weighted_combo: uu / (tp1 * tp1) + vuu / tp1 + vv + xx,
        damping: vvv,
        derivative_combo: vvv / tp1 + tt + xt + x2,
    })
}

/// Energy reports along one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries<T> {
    pub nonlinearity: Nonlinearity,
    pub mu0: T,
    pub reports: Vec<EnergyReport<T>>,
}

impl<T: Scalar> EnergySeries<T> {
    pub fn times(&self) -> Vec<T> {
        self.reports.iter().map(|r| r.t).collect()
    }

    /// `(t, value)` pairs of one functional.
    pub fn series(&self, pick: impl Fn(&EnergyReport<T>) -> T) -> Vec<(f64, f64)> {
        self.reports.iter().map(|r| (r.t.as_f64(), pick(r).as_f64())).collect()
    }

    fn require_linear(&self, what: &'static str) -> Result<()> {
        if self.nonlinearity.is_linear() {
            Ok(())
        } else {
            Err(Error::NonlinearTrajectory(what))
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<W> {
        write_reports_csv(&self.reports, out)
    }
}

/// Runs the solver and evaluates the functionals on every sampled state.
pub fn record_energies<T: Scalar>(
    u0: &Field<T>,
    u1: &Field<T>,
    config: &SolverConfig<T>,
    sampling: &Sampling<T>,
    a: T,
    mu: T,
) -> Result<(EnergySeries<T>, RunReport<T>)> {
    let params = config.potential()?;
    check_a_mu(&params, a, mu)?;
    let mut reports = Vec::new();
    let mut failure = None;
    let report = run_with(u0, u1, config, sampling, |s| {
        match compute_report_with(s, &params, a, mu, &config.nonlinearity) {
            Ok(r) => reports.push(r),
            Err(e) => failure = failure.take().or(Some(e)),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((
        EnergySeries {
            nonlinearity: config.nonlinearity,
            mu0: config.mu0,
            reports,
        },
        report,
    ))
}

/// `max_i |(E0(t_{i+1}) - E0(t_{i-1})) / (t_{i+1} - t_{i-1}) + \int V u_t^2 (t_i)|`
/// over interior samples, divided by `max(1, E0(0))`.
pub fn verify_dissipation<T: Scalar>(series: &EnergySeries<T>) -> Result<T> {
    series.require_linear("dissipation check")?;
    let r = &series.reports;
    let Some(first) = r.first() else {
        return Ok(T::zero());
    };
    let scale = first.e0.max(T::one());
    let mut worst = T::zero();
    for w in r.windows(3) {
        let rate = (w[2].e0 - w[0].e0) / (w[2].t - w[0].t);
        let res = (rate + w[1].damping).abs() / scale;
        if !(res <= worst) {
            worst = res;
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// Time and increase of the first step that rose above the slack.
    pub first_violation: Option<(f64, f64)>,
    pub max_increase: f64,
}

fn monotone<T: Scalar>(ts: &[T], vals: &[T], slack: T) -> MonotoneCheck {
    let mut first = None;
    let mut max_inc = T::neg_infinity();
    for k in 1..vals.len() {
        let inc = vals[k] - vals[k - 1];
        max_inc = max_inc.max(inc);
        if first.is_none() && !(inc <= slack) {
            first = Some((ts[k].as_f64(), inc.as_f64()));
        }
    }
    MonotoneCheck {
        monotone: first.is_none(),
        first_violation: first,
        max_increase: if vals.len() > 1 { max_inc.as_f64() } else { 0.0 },
    }
}

/// `E0` nonincreasing within `1e-8 E0(0)`.
pub fn verify_monotone_e0<T: Scalar>(series: &EnergySeries<T>) -> Result<MonotoneCheck> {
    series.require_linear("energy monotonicity check")?;
    let e0: Vec<T> = series.reports.iter().map(|r| r.e0).collect();
    let slack = T::lit(MONOTONE_SLACK) * e0.first().copied().unwrap_or(T::zero());
    Ok(monotone(&series.times(), &e0, slack))
}

/// `F_A` with `A = max(5/4, (1 + R0)/(2 mu0))` nonincreasing within `1e-8 F_A(0)`.
pub fn verify_monotone_f_a<T: Scalar>(
    series: &EnergySeries<T>,
    params: &PotentialParams<T>,
    r0: T,
) -> Result<MonotoneCheck> {
    series.require_linear("F_A monotonicity check")?;
    if !(params.mu0() > T::zero()) {
        return Err(Error::param("mu0", "F_A needs mu0 > 0"));
    }
    let a = default_a(params.mu0(), r0);
    let f: Vec<T> = series
        .reports
        .iter()
        .map(|r| a * r.e0 + r.i_func / (T::lit(2.0) * (r.t + T::one())))
        .collect();
    let slack = T::lit(MONOTONE_SLACK) * f.first().copied().unwrap_or(T::zero());
    Ok(monotone(&series.times(), &f, slack))
}

/// `functional / weighted_combo` against an explicit band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandCheck {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    /// `None` when the combo vanishes (vacuously inside).
    pub ratio: Option<f64>,
    pub inside: bool,
}

fn band<T: Scalar>(name: &'static str, value: T, combo: T, lower: T, upper: T) -> BandCheck {
    let (ratio, inside) = if combo > T::zero() {
        let r = value / combo;
        (Some(r.as_f64()), r >= lower && r <= upper)
    } else {
        (None, value == T::zero())
    };
    BandCheck {
        name,
        lower: lower.as_f64(),
        upper: upper.as_f64(),
        ratio,
        inside,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceCheck {
    pub t: f64,
    pub bands: Vec<BandCheck>,
}

impl EquivalenceCheck {
    pub fn all_inside(&self) -> bool {
        self.bands.iter().all(|b| b.inside)
    }
}

/// Checks
/// `F_A / combo` in `[1/8, (2A+1)/4]`;
/// for `mu0 <= 1` and `t >= t0`, `E2 / combo` in `[mu(1-mu)/8, 1/2 + mu/4]`;
/// for `mu0 > 1` and `t >= t1`, `E4 / combo` in `[1/32, 3/4]`.
/// `A` is the one stored in the report and must be at least `5/4`.
pub fn verify_equivalence_bounds<T: Scalar>(
    report: &EnergyReport<T>,
    params: &PotentialParams<T>,
    r0: T,
    mu: T,
) -> Result<EquivalenceCheck> {
    let mu0 = params.mu0();
    if !(mu0 > T::zero()) {
        return Err(Error::param("mu0", "equivalence bounds need mu0 > 0"));
    }
    if report.a < T::lit(1.25) {
        return Err(Error::param(
            "A",
            format!("bands need A >= 5/4, report has {}", report.a),
        ));
    }
    let t = report.t;
    let combo = report.weighted_combo;
    let mut bands = vec![band(
        "F_A",
        report.f_a,
        combo,
        T::lit(0.125),
        (T::lit(2.0) * report.a + T::one()) / T::lit(4.0),
    )];
    if mu0 <= T::one() {
        if !(mu > T::zero() && mu < mu0) {
            return Err(Error::param("mu", format!("must lie in (0, {mu0}), got {mu}")));
        }
        let t0 = threshold_t0(mu0, mu, r0);
        if t < t0 {
            return Err(Error::BelowThreshold {
                t: t.as_f64(),
                threshold: t0.as_f64(),
            });
        }
        // E2 is rebuilt with the requested mu
        let w = T::one() / (T::lit(2.0) * (t + T::one()));
        let e1 = report.e1 + (report.mu - mu) * w * report.norm_u_l2 * report.norm_u_l2;
        let e2 = report.e0 + mu * w * e1;
        bands.push(band(
            "E2",
            e2,
            combo,
            mu * (T::one() - mu) / T::lit(8.0),
            T::lit(0.5) + mu / T::lit(4.0),
        ));
    } else {
        let t1 = threshold_t1(mu0, r0);
        if t < t1 {
            return Err(Error::BelowThreshold {
                t: t.as_f64(),
                threshold: t1.as_f64(),
            });
        }
        bands.push(band("E4", report.e4, combo, T::lit(1.0 / 32.0), T::lit(0.75)));
    }
    Ok(EquivalenceCheck { t: t.as_f64(), bands })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    /// Exponent `a` of `c (1 + t)^{-a}`.
    pub slope: f64,
    /// `ln c`.
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares of `ln value` against `ln(1 + t)` over samples with `t` in the window.
pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::param("window", format!("need t_lo < t_hi, got ({lo}, {hi})")));
    }
    let inside: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= lo && t <= hi).collect();
    if inside.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: inside.len(),
        });
    }
    if let Some(&(t, value)) = inside.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(Error::NonPositive { t, value });
    }
    let xs: Vec<f64> = inside.iter().map(|&(t, _)| t.ln_1p()).collect();
    let ys: Vec<f64> = inside.iter().map(|&(_, v)| v.ln()).collect();
    let (slope, intercept, r2) = linear_regression(&xs, &ys);
    Ok(DecayFit {
        window,
        slope: -slope,
        intercept,
        r_squared: r2,
        points: inside.len(),
    })
}

pub const REPORT_COLUMNS: [&str; 18] = [
    "t",
    "E0",
    "I",
    "F_A",
    "E1",
    "E2",
    "E3",
    "E4",
    "norm_u",
    "norm_ux",
    "norm_ut",
    "norm_sqrtV_u",
    "weighted_combo",
    "damping",
    "derivative_combo",
    "A",
    "mu",
    "ratio_F_A",
];

pub fn write_reports_csv<T: Scalar, W: Write>(reports: &[EnergyReport<T>], out: W) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &REPORT_COLUMNS)?;
    for r in reports {
        let ratio = if r.weighted_combo > T::zero() {
            (r.f_a / r.weighted_combo).as_f64()
        } else {
            f64::NAN
        };
        w.row_f64(&[
            r.t.as_f64(),
            r.e0.as_f64(),
            r.i_func.as_f64(),
            r.f_a.as_f64(),
            r.e1.as_f64(),
            r.e2.as_f64(),
            r.e3.as_f64(),
            r.e4.as_f64(),
            r.norm_u_l2.as_f64(),
            r.norm_ux_l2.as_f64(),
            r.norm_ut_l2.as_f64(),
            r.norm_sqrtv_u_l2.as_f64(),
            r.weighted_combo.as_f64(),
            r.damping.as_f64(),
            r.derivative_combo.as_f64(),
            r.a.as_f64(),
            r.mu.as_f64(),
            ratio,
        ])?;
    }
    w.finish()
}
