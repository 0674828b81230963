use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blowup::LADDER_RATIO;
use crate::duhamel::{duhamel_steps, DEFAULT_STEP_BUDGET};
use crate::energetics::DEFAULT_FIT_WINDOW;
use crate::potential::{DEFAULT_PHI_STEP, MAX_PHI_STEP};
use crate::wavesolver::{Nonlinearity, Profile, Scheme, DEFAULT_BLOWUP_THRESHOLD, DEFAULT_CFL};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, column, message } => {
                write!(f, "config parse error at {line}:{column}: {message}")
            }
            ConfigError::Invalid(v) => write!(f, "invalid config: {}", v.join("; ")),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LinearDecay,
    PhiChecks,
    LifespanSweep,
    CriticalProbe,
    Picard,
    Dissipation,
    /// One trajectory with snapshots and energies.
    Simulate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LinearDecay => "linear_decay",
            ExperimentKind::PhiChecks => "phi_checks",
            ExperimentKind::LifespanSweep => "lifespan_sweep",
            ExperimentKind::CriticalProbe => "critical_probe",
            ExperimentKind::Picard => "picard",
            ExperimentKind::Dissipation => "dissipation",
            ExperimentKind::Simulate => "simulate",
        }
    }
}

/// Per-kind fallbacks for the optional keys.
struct KindDefaults {
    mu0: f64,
    nonlinearity: &'static str,
    p: Option<f64>,
    profile: &'static str,
    eps: f64,
    t_end: f64,
    dx: f64,
}

fn kind_defaults(kind: ExperimentKind) -> KindDefaults {
    use ExperimentKind::*;
    let base = KindDefaults {
        mu0: 1.0,
        nonlinearity: "none",
        p: None,
        profile: "bump",
        eps: 1.0,
        t_end: 400.0,
        dx: 0.0625,
    };
    match kind {
        LinearDecay => base,
        PhiChecks => KindDefaults { t_end: 100.0, ..base },
        LifespanSweep => KindDefaults {
            mu0: 0.5,
            nonlinearity: "abs_p",
            p: Some(2.0),
            profile: "velocity_bump",
            t_end: 500.0,
            dx: 0.125,
            ..base
        },
        CriticalProbe => KindDefaults {
            nonlinearity: "abs_p",
            profile: "velocity_bump",
            t_end: 1000.0,
            dx: 0.125,
            ..base
        },
        Picard => KindDefaults {
            mu0: 0.5,
            nonlinearity: "abs_p",
            p: Some(6.0),
            profile: "velocity_bump",
            eps: 0.5,
            t_end: 20.0,
            ..base
        },
        Dissipation => KindDefaults {
            t_end: 5.0,
            dx: 1.0 / 64.0,
            ..base
        },
        Simulate => KindDefaults {
            mu0: 0.0,
            t_end: 10.0,
            ..base
        },
    }
}

/// One experiment; every optional key falls back to a kind-dependent default.
///
/// Grid keys: give `dx`, or `half_width` with `nx`. Without `half_width` the domain is the
/// smallest one satisfying `L >= R0 + t_end + 4 dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Directory name under `out_dir`; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default = "one")]
    pub r0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    /// Data amplitude (simulate, picard, linear kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "default_threshold")]
    pub blowup_threshold: f64,

    /// Decay fit window `[t_lo, t_hi]`.
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    /// Energy sampling stride in steps; defaults to one time unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
    /// Snapshot times of `simulate`; defaults to eleven evenly spaced times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,

    /// Explicit eps ladder; otherwise `eps_max / eps_ratio^k`, `k < eps_ladder`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_ladder: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_ratio: Option<f64>,
    #[serde(default = "default_refinements")]
    pub max_refinements: usize,
    #[serde(default = "default_refinement_tol")]
    pub refinement_tol: f64,

    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_dr")]
    pub dr: f64,

    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Picard panel width in solver steps.
    #[serde(default = "one_usize")]
    pub quad_steps: usize,
    #[serde(default = "default_budget")]
    pub step_budget: u64,
    /// Weight parameter `mu` of the energy functionals; defaults to `0.99 min(mu0, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,

    /// Grid levels of the dissipation study, each halving `dx`.
    #[serde(default = "default_levels")]
    pub levels: usize,

    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_order_min")]
    pub order_min: f64,
    #[serde(default = "default_fit_tol")]
    pub fit_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_floor: Option<f64>,
    #[serde(default = "default_phi_tol")]
    pub phi_residual_tol: f64,
    #[serde(default = "default_r2_min")]
    pub r2_min: f64,
    #[serde(default = "half")]
    pub ratio_max: f64,
    /// Final Picard iterate against the direct solver; defaults to `0.01 quad_dt + 10 d_K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard_tol: Option<f64>,
    /// Allowed growth of bounded quantities over their reference value.
    #[serde(default = "two")]
    pub growth_factor: f64,

    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn two() -> f64 {
    2.0
}
fn one_usize() -> usize {
    1
}
fn default_cfl() -> f64 {
    DEFAULT_CFL
}
fn default_threshold() -> f64 {
    DEFAULT_BLOWUP_THRESHOLD
}
fn default_window() -> [f64; 2] {
    [DEFAULT_FIT_WINDOW.0, DEFAULT_FIT_WINDOW.1]
}
fn default_refinements() -> usize {
    crate::blowup::DEFAULT_REFINEMENTS
}
fn default_refinement_tol() -> f64 {
    crate::blowup::REFINEMENT_TOL
}
fn default_r_max() -> f64 {
    50.0
}
fn default_dr() -> f64 {
    DEFAULT_PHI_STEP
}
fn default_iterations() -> usize {
    5
}
fn default_budget() -> u64 {
    DEFAULT_STEP_BUDGET
}
fn default_levels() -> usize {
    3
}
fn default_residual_tol() -> f64 {
    1e-3
}
fn default_order_min() -> f64 {
    1.8
}
fn default_fit_tol() -> f64 {
    0.15
}
fn default_phi_tol() -> f64 {
    1e-6
}
fn default_r2_min() -> f64 {
    0.9
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_perturbation() -> f64 {
    0.05
}

impl ExperimentConfig {
    /// Config of `kind` with every key at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        let text = format!("kind = \"{}\"", kind.name());
        toml::from_str(&text).expect("defaults parse")
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn mu0(&self) -> f64 {
        self.mu0.unwrap_or(kind_defaults(self.kind).mu0)
    }

    pub fn nonlinearity_name(&self) -> String {
        self.nonlinearity
            .clone()
            .unwrap_or_else(|| kind_defaults(self.kind).nonlinearity.to_string())
    }

    /// `p`, fixed to `1 + 2/mu0` for the critical probe.
    pub fn p(&self) -> Option<f64> {
        if self.kind == ExperimentKind::CriticalProbe && self.p.is_none() && self.mu0() > 0.0 {
            return Some(1.0 + 2.0 / self.mu0());
        }
        self.p.or(kind_defaults(self.kind).p)
    }

    pub fn nonlinearity(&self) -> crate::Result<Nonlinearity> {
        Nonlinearity::from_parts(&self.nonlinearity_name(), self.p(), self.q)
    }

    pub fn profile_name(&self) -> String {
        self.profile
            .clone()
            .unwrap_or_else(|| kind_defaults(self.kind).profile.to_string())
    }

    pub fn profile(&self) -> crate::Result<Profile> {
        Profile::from_name(&self.profile_name())
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(kind_defaults(self.kind).eps)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or(kind_defaults(self.kind).t_end)
    }

    /// Spacing from `dx`, or from `half_width` and `nx`.
    pub fn dx(&self) -> f64 {
        match (self.dx, self.half_width, self.nx) {
            (Some(dx), _, _) => dx,
            (None, Some(l), Some(nx)) if nx > 1 => 2.0 * l / (nx - 1) as f64,
            _ => kind_defaults(self.kind).dx,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or_else(|| crate::energetics::default_mu(self.mu0()))
    }

    pub fn eps_ladder(&self) -> Vec<f64> {
        if let Some(v) = &self.eps_values {
            return v.clone();
        }
        let critical = self.kind == ExperimentKind::CriticalProbe;
        let eps_max = self.eps_max.unwrap_or(if critical { 1.2 } else { 1.0 });
        let n = self.eps_ladder.unwrap_or(if critical { 3 } else { 8 });
        let ratio = self.eps_ratio.unwrap_or(if critical { 1.1 } else { LADDER_RATIO });
        crate::blowup::geometric_ladder(eps_max, ratio, n)
    }

    pub fn decay_floor(&self) -> f64 {
        self.decay_floor.unwrap_or(self.mu0().min(1.0) - 0.1)
    }

    pub fn sample_every(&self) -> usize {
        match self.sample_every {
            Some(k) => k.max(1),
            None if self.kind == ExperimentKind::Dissipation => 1,
            None => ((1.0 / (self.cfl * self.dx())).round() as usize).max(1),
        }
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_times
            .clone()
            .unwrap_or_else(|| (0..=10).map(|k| self.t_end() * k as f64 / 10.0).collect())
    }

    /// Panel width of the Picard rectangle rule.
    pub fn quad_dt(&self) -> f64 {
        self.quad_steps as f64 * self.cfl * self.dx()
    }

    pub fn perturbation(&self) -> Option<crate::wavesolver::Perturbation> {
        self.seed.map(|seed| crate::wavesolver::Perturbation {
            seed,
            amplitude: self.perturbation,
        })
    }

    /// Writes every kind-dependent default into the optional keys.
    pub fn fill_defaults(&mut self) {
        self.name = Some(self.name());
        self.mu0 = Some(self.mu0());
        self.nonlinearity = Some(self.nonlinearity_name());
        self.p = self.p();
        self.profile = Some(self.profile_name());
        self.eps = Some(self.eps());
        self.t_end = Some(self.t_end());
        if self.half_width.is_none() || self.nx.is_none() {
            self.dx = Some(self.dx());
        }
        self.mu = Some(self.mu());
        self.decay_floor = Some(self.decay_floor());
        if matches!(self.kind, ExperimentKind::LifespanSweep | ExperimentKind::CriticalProbe)
            && self.eps_values.is_none()
        {
            self.eps_values = Some(self.eps_ladder());
            self.eps_max = None;
            self.eps_ladder = None;
            self.eps_ratio = None;
        }
    }

    /// `mu0 (p - 1) < 2`
    pub fn is_subcritical(&self) -> bool {
        self.p().is_some_and(|p| self.mu0() * (p - 1.0) < 2.0)
    }

    /// Half-width required by the kind's containment constraint at spacing `dx`.
    pub fn required_half_width(&self, dx: f64) -> f64 {
        let extra = if self.kind == ExperimentKind::Picard {
            2.0 * dx
        } else {
            0.0
        };
        self.r0 + extra + self.t_end() + 4.0 * dx
    }

    /// Every violated constraint, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        use ExperimentKind::*;
        let mut v = Vec::new();
        let mu0 = self.mu0();
        need(
            &mut v,
            mu0.is_finite() && mu0 >= 0.0,
            format!("mu0 must be finite and >= 0, got {mu0}"),
        );
        need(
            &mut v,
            self.r0 > 0.0 && self.r0.is_finite(),
            format!("r0 must be positive, got {}", self.r0),
        );
        need(
            &mut v,
            self.cfl > 0.0 && self.cfl <= 1.0,
            format!("cfl must lie in (0, 1], got {}", self.cfl),
        );
        let t_end = self.t_end();
        need(
            &mut v,
            t_end > 0.0 && t_end.is_finite(),
            format!("t_end must be positive, got {t_end}"),
        );
        need(
            &mut v,
            self.blowup_threshold > 0.0,
            format!("blowup_threshold must be positive, got {}", self.blowup_threshold),
        );
        if let Some(name) = &self.name {
            let ok = !name.is_empty() && !name.contains(['/', '\\']) && name != "." && name != "..";
            need(&mut v, ok, format!("name `{name}` is not a plain directory name"));
        }
        let nl = self.nonlinearity();
        if let Err(e) = &nl {
            v.push(e.to_string());
        }
        if let Err(e) = self.profile() {
            v.push(e.to_string());
        }
        let eps = self.eps();
        need(
            &mut v,
            eps.is_finite() && eps >= 0.0,
            format!("eps must be finite and >= 0, got {eps}"),
        );

        let lifespan = matches!(self.kind, LifespanSweep | CriticalProbe);
        if self.dx.is_some() && (self.half_width.is_some() || self.nx.is_some()) {
            v.push("conflicting grid keys: give dx, or half_width with nx".into());
        }
        if self.dx.is_none() && self.half_width.is_some() != self.nx.is_some() {
            v.push("half_width and nx must be given together".into());
        }
        if let Some(nx) = self.nx {
            if nx < 3 || nx % 2 == 0 {
                v.push(format!("nx must be odd and >= 3, got {nx}"));
            }
        }
        let dx = self.dx();
        need(
            &mut v,
            dx > 0.0 && dx.is_finite(),
            format!("dx must be positive, got {dx}"),
        );
        if lifespan && (self.half_width.is_some() || self.nx.is_some()) {
            v.push("lifespan grids are refined by halving dx; half_width and nx are not accepted".into());
        }
        if self.kind == Dissipation && (self.half_width.is_some() || self.nx.is_some()) {
            v.push("dissipation refines dx; half_width and nx are not accepted".into());
        }
        if let Some(l) = self.half_width {
            let required = self.required_half_width(dx);
            if self.kind != PhiChecks && !(l >= required * (1.0 - 1e-9)) {
                v.push(format!(
                    "containment violated: L = {l} < R0 + t_end + 4dx = {required} (L >= R0 + t_end + 4dx)"
                ));
            }
        }
        let (lo, hi) = (self.window[0], self.window[1]);
        need(
            &mut v,
            lo >= 0.0 && lo < hi,
            format!("window must satisfy 0 <= lo < hi, got [{lo}, {hi}]"),
        );
        need(
            &mut v,
            self.perturbation.abs() < 1.0,
            format!("perturbation must lie in (-1, 1), got {}", self.perturbation),
        );
        if let Some(times) = &self.snapshot_times {
            need(
                &mut v,
                times.iter().all(|t| t.is_finite() && *t >= 0.0),
                "snapshot_times must be finite and >= 0".into(),
            );
        }
        let mu = self.mu();
        if mu0 > 0.0 && mu0 <= 1.0 {
            need(
                &mut v,
                mu > 0.0 && mu < mu0,
                format!("mu must lie in (0, mu0) = (0, {mu0}), got {mu}"),
            );
        }

        let linear = nl.as_ref().is_ok_and(|n| n.is_linear());
        match self.kind {
            LinearDecay | Dissipation => {
                need(
                    &mut v,
                    linear,
                    format!("{} needs nonlinearity = none", self.kind.name()),
                );
                need(&mut v, mu0 > 0.0, format!("{} needs mu0 > 0", self.kind.name()));
                if self.kind == Dissipation {
                    need(
                        &mut v,
                        self.levels >= 2,
                        format!("levels must be >= 2 to measure an order, got {}", self.levels),
                    );
                } else {
                    need(&mut v, hi <= t_end, format!("window end {hi} exceeds t_end = {t_end}"));
                }
            }
            PhiChecks => {
                need(
                    &mut v,
                    t_end >= 10.0,
                    format!("phi_checks uses t_end as the psi horizon and needs >= 10, got {t_end}"),
                );
                need(
                    &mut v,
                    self.dr > 0.0 && self.dr <= MAX_PHI_STEP,
                    format!("dr must lie in (0, {MAX_PHI_STEP}], got {}", self.dr),
                );
                need(
                    &mut v,
                    self.r_max >= crate::potential::GROWTH_CHECK_MIN_RANGE,
                    format!(
                        "r_max must be >= {}, got {}",
                        crate::potential::GROWTH_CHECK_MIN_RANGE,
                        self.r_max
                    ),
                );
            }
            LifespanSweep | CriticalProbe => {
                let ladder = self.eps_ladder();
                need(
                    &mut v,
                    ladder.iter().all(|e| e.is_finite() && *e > 0.0),
                    "eps ladder entries must be positive".into(),
                );
                if let Some(r) = self.eps_ratio {
                    need(&mut v, r > 1.0, format!("eps_ratio must exceed 1, got {r}"));
                }
                need(
                    &mut v,
                    nl.as_ref()
                        .is_ok_and(|n| matches!(n, Nonlinearity::AbsP { .. } | Nonlinearity::SignedP { .. })),
                    "lifespans need nonlinearity abs_p or signed_p".into(),
                );
                need(
                    &mut v,
                    self.refinement_tol > 0.0,
                    "refinement_tol must be positive".into(),
                );
                if self.kind == CriticalProbe {
                    need(&mut v, mu0 > 0.0, "critical_probe needs mu0 > 0".into());
                    need(
                        &mut v,
                        !ladder.is_empty(),
                        "critical_probe needs at least one eps".into(),
                    );
                    if let (Some(p), true) = (self.p, mu0 > 0.0) {
                        let pc = 1.0 + 2.0 / mu0;
                        need(
                            &mut v,
                            (p - pc).abs() <= 1e-12 * pc,
                            format!("critical_probe fixes p = 1 + 2/mu0 = {pc}, got {p}"),
                        );
                    }
                } else {
                    // supercritical sweeps are allowed and checked for censoring instead of fitted
                    need(
                        &mut v,
                        !self.is_subcritical() || ladder.len() >= crate::blowup::MIN_LADDER,
                        format!(
                            "eps ladder needs >= {} entries, got {}",
                            crate::blowup::MIN_LADDER,
                            ladder.len()
                        ),
                    );
                }
            }
            Picard => {
                need(&mut v, !linear, "picard needs a nonlinearity".into());
                need(&mut v, self.iterations >= 1, "iterations must be >= 1".into());
                need(&mut v, self.quad_steps >= 1, "quad_steps must be >= 1".into());
                let quad_dt = self.quad_dt();
                if quad_dt > 0.0 && t_end > 0.0 {
                    let panels = (t_end / quad_dt).round() as usize;
                    let cost = duhamel_steps(panels, self.quad_steps).saturating_mul(self.iterations as u64);
                    need(
                        &mut v,
                        cost <= self.step_budget,
                        format!(
                            "resource budget exceeded: {cost} solver steps > step_budget = {}",
                            self.step_budget
                        ),
                    );
                }
            }
            Simulate => {}
        }
        v
    }

    /// Validated copy with defaults filled.
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(ConfigError::Invalid(v));
        }
        self.fill_defaults();
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn need(v: &mut Vec<String>, ok: bool, msg: String) {
    if !ok {
        v.push(msg);
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
    ConfigError::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

/// Parses a config into a raw key/value table, without validation.
pub fn parse_table(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>().map_err(|e| parse_error(text, &e))
}

/// Builds and validates a config from a key/value table.
pub fn from_table(table: toml::Table) -> Result<ExperimentConfig, ConfigError> {
    let text = toml::to_string(&table).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    from_text(&text)
}

fn from_text(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table = parse_table(text)?;
    match table.get("kind") {
        None => return Err(ConfigError::Invalid(vec!["missing experiment kind".into()])),
        Some(toml::Value::String(s)) if s.is_empty() => {
            return Err(ConfigError::Invalid(vec!["empty experiment kind".into()]))
        }
        _ => {}
    }
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    config.validated()
}

/// Parses and validates config text.
pub fn load_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    from_text(text)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> crate::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(load_config_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = load_config_str("kind = \"linear_decay\"\n").unwrap();
        assert_eq!(c.mu0, Some(1.0));
        assert_eq!(c.t_end, Some(400.0));
        assert_eq!(c.dx, Some(0.0625));
        assert_eq!(c.name.as_deref(), Some("linear_decay"));
        assert_eq!(c.profile.as_deref(), Some("bump"));
        assert_eq!(c.cfl, 1.0);
    }

    #[test]
    fn containment_is_named() {
        let text = "kind = \"simulate\"\nhalf_width = 5.0\nnx = 161\nt_end = 10.0\n";
        let ConfigError::Invalid(v) = load_config_str(text).unwrap_err() else {
            panic!()
        };
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("containment"), "{v:?}");
    }

    #[test]
    fn all_violations_are_listed() {
        let text =
            "kind = \"linear_decay\"\nmu0 = -1.0\ncfl = 2.0\nnonlinearity = \"abs_p\"\np = 2.0\ndx = 0.1\nnx = 11\n";
        let ConfigError::Invalid(v) = load_config_str(text).unwrap_err() else {
            panic!()
        };
        assert!(v.len() >= 4, "{v:?}");
        assert!(v.iter().any(|m| m.contains("cfl")));
        assert!(v.iter().any(|m| m.contains("mu0")));
        assert!(v.iter().any(|m| m.contains("conflicting")));
        assert!(v.iter().any(|m| m.contains("nonlinearity = none")));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = load_config_str("kind = \"picard\"\nmu0 = = 1\n").unwrap_err();
        let ConfigError::Parse { line, column, .. } = err else {
            panic!("{err:?}")
        };
        assert_eq!(line, 2);
        assert!(column > 1);
        let err = load_config_str("kind = \"picard\"\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn empty_kind_rejected() {
        assert!(matches!(load_config_str("kind = \"\"\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(load_config_str("mu0 = 1.0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            load_config_str("kind = \"nope\"\n"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn round_trip() {
        for kind in [
            "linear_decay",
            "phi_checks",
            "lifespan_sweep",
            "critical_probe",
            "picard",
            "dissipation",
            "simulate",
        ] {
            let c = load_config_str(&format!("kind = \"{kind}\"\nseed = 7\n")).unwrap();
            let again = load_config_str(&c.to_toml()).unwrap();
            assert_eq!(c, again, "{kind}");
        }
    }

    #[test]
    fn critical_fixes_p() {
        let c = load_config_str("kind = \"critical_probe\"\nmu0 = 0.5\n").unwrap();
        assert_eq!(c.p, Some(5.0));
        assert!(load_config_str("kind = \"critical_probe\"\nmu0 = 1.0\np = 2.0\n").is_err());
        assert_eq!(c.eps_values.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn short_ladder_rejected() {
        let r = load_config_str("kind = \"lifespan_sweep\"\neps_ladder = 3\n");
        let ConfigError::Invalid(v) = r.unwrap_err() else {
            panic!()
        };
        assert!(v[0].contains("ladder"));
        assert!(load_config_str("kind = \"lifespan_sweep\"\np = 6.0\neps_ladder = 1\n").is_ok());
    }

    #[test]
    fn picard_budget() {
        let r = load_config_str("kind = \"picard\"\nstep_budget = 1000\n");
        let ConfigError::Invalid(v) = r.unwrap_err() else {
            panic!()
        };
        assert!(v[0].contains("budget"));
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
