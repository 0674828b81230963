//! Config parsing, job planning, dispatch and artifact persistence.
//!
//! Layout: `<out_dir>/<name>/<job-id>/...` for per-job artifacts, aggregate CSV/JSON and
//! `manifest.json` directly under `<out_dir>/<name>/`. Only the manifest carries timings.

mod config;
mod run;
mod verify;

pub use config::{
    from_table, load_config, load_config_str, parse_table, ConfigError, ExperimentConfig, ExperimentKind,
};
pub use run::{plan_jobs, run_experiment, InvariantResult, Job, JobSummary, Manifest, Task};
pub use verify::{run_verify, verify_suite};
