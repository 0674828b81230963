//! Argument handling for the `dampwave` binary. Every subcommand builds an experiment config
//! and hands it to the harness.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dampwave::harness::{self, ConfigError, ExperimentConfig, Manifest};
use toml::{Table, Value};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DAMPWAVE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dampwave",
    version,
    about = "Damped wave experiments: lifespans, decay, phi tables, Picard iteration"
)]
pub struct Cli {
    /// Log progress to standard error (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One trajectory with snapshots and energy functionals.
    Simulate(Flags),
    /// phi table with residual, growth and psi-mass checks.
    Phi(Flags),
    /// Linear decay of the weighted energy combination.
    Decay(Flags),
    /// eps sweep and fit of the lifespan exponent.
    Lifespan(Flags),
    /// Lifespans at the critical power p = 1 + 2/mu0.
    Critical(Flags),
    /// Picard iteration of the Duhamel formula against the direct solver.
    Picard(Flags),
    /// Any experiment kind from a config file.
    Run(Flags),
    /// Fast invariant tier end to end.
    Verify(VerifyFlags),
}

#[derive(Debug, Args)]
pub struct VerifyFlags {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

/// Flags mirror the config keys; they override values read from `--config`.
#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Config file; flags take precedence over its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub mu0: Option<f64>,
    /// none, abs_p, signed_p, space_q or mixed.
    #[arg(long)]
    pub nonlinearity: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    /// bump, velocity_bump or double_bump.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub dx: Option<f64>,
    #[arg(long)]
    pub cfl: Option<f64>,
    /// leapfrog or oracle_rk.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub blowup_threshold: Option<f64>,
    /// Fit window as `lo,hi`.
    #[arg(long, value_delimiter = ',')]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    pub sample_every: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub snapshot_times: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub eps_values: Option<Vec<f64>>,
    #[arg(long)]
    pub eps_max: Option<f64>,
    /// Number of ladder points.
    #[arg(long)]
    pub eps_ladder: Option<usize>,
    #[arg(long)]
    pub eps_ratio: Option<f64>,
    #[arg(long)]
    pub max_refinements: Option<usize>,
    #[arg(long)]
    pub refinement_tol: Option<f64>,
    #[arg(long, visible_alias = "rmax")]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub dr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub quad_steps: Option<usize>,
    #[arg(long)]
    pub step_budget: Option<u64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub residual_tol: Option<f64>,
    #[arg(long)]
    pub order_min: Option<f64>,
    #[arg(long)]
    pub fit_tol: Option<f64>,
    #[arg(long)]
    pub decay_floor: Option<f64>,
    #[arg(long)]
    pub phi_residual_tol: Option<f64>,
    #[arg(long)]
    pub r2_min: Option<f64>,
    #[arg(long)]
    pub ratio_max: Option<f64>,
    #[arg(long)]
    pub picard_tol: Option<f64>,
    #[arg(long)]
    pub growth_factor: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub perturbation: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Run(dampwave::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<dampwave::Error> for CliError {
    fn from(e: dampwave::Error) -> Self {
        match e {
            dampwave::Error::Config(c) => CliError::Config(c),
            other => CliError::Run(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => EXIT_INVARIANT,
            _ => EXIT_USAGE,
        }
    }
}

fn num(x: f64) -> Value {
    Value::Float(x)
}

fn int(x: u64) -> Result<Value, CliError> {
    i64::try_from(x)
        .map(Value::Integer)
        .map_err(|_| CliError::Usage(format!("integer {x} out of range")))
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().copied().map(num).collect())
}

impl Flags {
    /// Key/value pairs of every flag that was given.
    fn entries(&self) -> Result<Vec<(&'static str, Value)>, CliError> {
        let mut e: Vec<(&'static str, Value)> = Vec::new();
        macro_rules! put {
            ($key:literal, $field:expr, $conv:expr) => {
                if let Some(v) = &$field {
                    e.push(($key, $conv(v)?));
                }
            };
        }
        let s = |v: &String| Ok::<_, CliError>(Value::String(v.clone()));
        let f = |v: &f64| Ok::<_, CliError>(num(*v));
        let u = |v: &usize| int(*v as u64);
        let u64v = |v: &u64| int(*v);
        let list = |v: &Vec<f64>| Ok::<_, CliError>(floats(v));
        put!("name", self.name, s);
        put!("mu0", self.mu0, f);
        put!("nonlinearity", self.nonlinearity, s);
        put!("p", self.p, f);
        put!("q", self.q, f);
        put!("r0", self.r0, f);
        put!("profile", self.profile, s);
        put!("eps", self.eps, f);
        put!("half_width", self.half_width, f);
        put!("nx", self.nx, u);
        put!("dx", self.dx, f);
        put!("cfl", self.cfl, f);
        put!("scheme", self.scheme, s);
        put!("t_end", self.t_end, f);
        put!("blowup_threshold", self.blowup_threshold, f);
        put!("window", self.window, list);
        put!("sample_every", self.sample_every, u);
        put!("snapshot_times", self.snapshot_times, list);
        put!("eps_values", self.eps_values, list);
        put!("eps_max", self.eps_max, f);
        put!("eps_ladder", self.eps_ladder, u);
        put!("eps_ratio", self.eps_ratio, f);
        put!("max_refinements", self.max_refinements, u);
        put!("refinement_tol", self.refinement_tol, f);
        put!("r_max", self.r_max, f);
        put!("dr", self.dr, f);
        put!("iterations", self.iterations, u);
        put!("quad_steps", self.quad_steps, u);
        put!("step_budget", self.step_budget, u64v);
        put!("mu", self.mu, f);
        put!("levels", self.levels, u);
        put!("residual_tol", self.residual_tol, f);
        put!("order_min", self.order_min, f);
        put!("fit_tol", self.fit_tol, f);
        put!("decay_floor", self.decay_floor, f);
        put!("phi_residual_tol", self.phi_residual_tol, f);
        put!("r2_min", self.r2_min, f);
        put!("ratio_max", self.ratio_max, f);
        put!("picard_tol", self.picard_tol, f);
        put!("growth_factor", self.growth_factor, f);
        put!("parallelism", self.parallelism, u);
        put!("seed", self.seed, u64v);
        put!("perturbation", self.perturbation, f);
        if let Some(w) = &self.window {
            if w.len() != 2 {
                return Err(CliError::Usage(format!(
                    "--window takes two values lo,hi, got {}",
                    w.len()
                )));
            }
        }
        Ok(e)
    }
}

fn out_dir_default() -> Option<PathBuf> {
    std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Merges `--config`, the flags and the subcommand's kind into one validated config.
///
/// Precedence: flags, then the file, then `DAMPWAVE_OUT` for `out_dir`, then defaults.
pub fn build_config(kind: Option<&str>, flags: &Flags) -> Result<ExperimentConfig, CliError> {
    let mut table = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            harness::parse_table(&text).map_err(CliError::Config)?
        }
        None => Table::new(),
    };
    if let Some(kind) = kind {
        match table.get("kind").and_then(Value::as_str) {
            Some(k) if k != kind => {
                return Err(CliError::Usage(format!(
                    "config file has kind `{k}` but the subcommand runs `{kind}`"
                )))
            }
            _ => {
                table.insert("kind".into(), Value::String(kind.into()));
            }
        }
    }
    for (key, value) in flags.entries()? {
        table.insert(key.into(), value);
    }
    let out = flags
        .out_dir
        .clone()
        .or_else(|| (!table.contains_key("out_dir")).then(out_dir_default).flatten());
    if let Some(out) = out {
        table.insert("out_dir".into(), Value::String(out.to_string_lossy().into_owned()));
    }
    harness::from_table(table).map_err(CliError::Config)
}

fn kind_of(cmd: &Command) -> Option<&'static str> {
    match cmd {
        Command::Simulate(_) => Some("simulate"),
        Command::Phi(_) => Some("phi_checks"),
        Command::Decay(_) => Some("linear_decay"),
        Command::Lifespan(_) => Some("lifespan_sweep"),
        Command::Critical(_) => Some("critical_probe"),
        Command::Picard(_) => Some("picard"),
        Command::Run(_) | Command::Verify(_) => None,
    }
}

fn report(m: &Manifest) {
    let status = if m.passed { "PASS" } else { "FAIL" };
    println!(
        "{status} {} ({:.2} s) -> {}",
        m.experiment,
        m.wall_time_s,
        m.directory.join("manifest.json").display()
    );
    for i in &m.invariants {
        println!("  [{}] {}: {}", if i.passed { "ok" } else { "FAIL" }, i.name, i.detail);
    }
}

/// Executes a parsed invocation and returns the manifests produced.
pub fn execute(cli: &Cli) -> Result<Vec<Manifest>, CliError> {
    match &cli.command {
        Command::Verify(v) => {
            let out = v
                .out_dir
                .clone()
                .or_else(out_dir_default)
                .unwrap_or_else(|| PathBuf::from("out"));
            Ok(harness::run_verify(Path::new(&out), v.parallelism.unwrap_or(0))?)
        }
        Command::Run(flags) if flags.config.is_none() => Err(CliError::Usage("`run` needs --config".into())),
        cmd @ (Command::Simulate(flags)
        | Command::Phi(flags)
        | Command::Decay(flags)
        | Command::Lifespan(flags)
        | Command::Critical(flags)
        | Command::Picard(flags)
        | Command::Run(flags)) => {
            let config = build_config(kind_of(cmd), flags)?;
            Ok(vec![harness::run_experiment(&config)?])
        }
    }
}

/// Parses `args`, runs, prints a summary and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli) {
        Ok(manifests) => {
            manifests.iter().for_each(report);
            if manifests.iter().all(|m| m.passed) {
                EXIT_OK
            } else {
                EXIT_INVARIANT
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
