use std::path::Path;

use super::config::{ExperimentConfig, ExperimentKind};
use super::run::{run_experiment, Manifest};
use crate::error::Result;

fn named(kind: ExperimentKind, name: &str, out: &Path, parallelism: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind);
    c.name = Some(name.to_string());
    c.out_dir = out.to_path_buf();
    c.parallelism = parallelism;
    c
}

/// The fast invariant tier: seconds per experiment on one core.
pub fn verify_suite(out: &Path, parallelism: usize) -> Vec<ExperimentConfig> {
    use ExperimentKind::*;
    let mut suite = Vec::new();

    let mut c = named(PhiChecks, "verify-phi-mu1", out, parallelism);
    c.mu0 = Some(1.0);
    suite.push(c);
    let mut c = named(PhiChecks, "verify-phi-mu0", out, parallelism);
    c.mu0 = Some(0.0);
    c.t_end = Some(10.0);
    suite.push(c);

    let mut c = named(Simulate, "verify-free-wave", out, parallelism);
    c.t_end = Some(6.0);
    suite.push(c);

    let mut c = named(LinearDecay, "verify-decay-mu05", out, parallelism);
    c.mu0 = Some(0.5);
    suite.push(c);

    suite.push(named(Dissipation, "verify-dissipation", out, parallelism));
    suite.push(named(Picard, "verify-picard", out, parallelism));

    let mut c = named(LifespanSweep, "verify-lifespan", out, parallelism);
    c.mu0 = Some(0.5);
    c.p = Some(2.0);
    suite.push(c);
    suite
}

/// Runs the fast tier; every manifest is returned, failed or not.
pub fn run_verify(out: &Path, parallelism: usize) -> Result<Vec<Manifest>> {
    verify_suite(out, parallelism).iter().map(run_experiment).collect()
}
