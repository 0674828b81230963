use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use dampwave::harness::{load_config, plan_jobs, run_experiment, ExperimentConfig, ExperimentKind, Manifest, Task};

fn config(kind: ExperimentKind, out: &Path, name: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind);
    c.name = Some(name.into());
    c.out_dir = out.to_path_buf();
    c
}

/// Every artifact except the manifest, keyed by relative path.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn sweep(out: &Path, name: &str, parallelism: usize) -> Manifest {
    let mut c = config(ExperimentKind::LifespanSweep, out, name);
    c.mu0 = Some(0.5);
    c.p = Some(2.0);
    c.parallelism = parallelism;
    run_experiment(&c).unwrap()
}

#[test]
fn lifespan_sweep_layout_and_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let m = sweep(tmp.path(), "sweep", 1);
    assert!(m.passed, "{:?}", m.failed_invariants());
    let dir = tmp.path().join("sweep");
    assert_eq!(m.directory, dir);
    assert_eq!(m.jobs.len(), 8);
    for (k, j) in m.jobs.iter().enumerate() {
        assert_eq!(j.id, format!("job-{k:03}"));
        assert!(dir.join(&j.id).join("record.json").is_file());
    }
    for f in ["records.csv", "fit.json", "config.toml", "manifest.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let fit: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("fit.json")).unwrap()).unwrap();
    assert!((fit["theory_slope"].as_f64().unwrap() + 4.0 / 3.0).abs() < 1e-12);
    assert!(fit["rel_error"].as_f64().unwrap() <= 0.15);

    let back = load_config(&dir.join("config.toml")).unwrap();
    assert_eq!(back, m.config);
    let on_disk: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, m);
}

#[test]
fn results_do_not_depend_on_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    sweep(&tmp.path().join("a"), "s", 1);
    sweep(&tmp.path().join("b"), "s", 4);
    let a = artifacts(&tmp.path().join("a/s"));
    let mut b = artifacts(&tmp.path().join("b/s"));
    // The stored config records the parallelism itself.
    a.keys().for_each(|k| assert!(b.contains_key(k), "{k}"));
    let (ca, cb) = (&a["config.toml"], b.remove("config.toml").unwrap());
    assert_ne!(ca, &cb);
    for (k, v) in a.iter().filter(|(k, _)| *k != "config.toml") {
        assert_eq!(v, &b[k], "{k} differs");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::Simulate, tmp.path(), "sim");
    c.mu0 = Some(0.5);
    c.nonlinearity = Some("abs_p".into());
    c.p = Some(3.0);
    c.eps = Some(0.1);
    c.seed = Some(11);
    run_experiment(&c).unwrap();
    let first = artifacts(&tmp.path().join("sim"));
    run_experiment(&c).unwrap();
    assert_eq!(first, artifacts(&tmp.path().join("sim")));
}

#[test]
fn failing_invariant_is_reported_not_raised() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::LinearDecay, tmp.path(), "decay");
    c.mu0 = Some(0.5);
    c.t_end = Some(100.0);
    c.window = [10.0, 100.0];
    c.decay_floor = Some(3.0);
    let m = run_experiment(&c).unwrap();
    assert!(!m.passed);
    let names: Vec<&str> = m.failed_invariants().iter().map(|i| i.name.as_str()).collect();
    assert_eq!(names, ["decay_slope"]);
    assert!(tmp.path().join("decay/job-000/energies.csv").is_file());
}

#[test]
fn strong_damping_decays_at_unit_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::LinearDecay, tmp.path(), "mu2");
    c.mu0 = Some(2.0);
    let m = run_experiment(&c).unwrap();
    assert!(m.passed, "{:?}", m.failed_invariants());
    let slope = m.invariant("decay_slope").unwrap().value.unwrap();
    assert!(slope >= 0.9, "{slope}");
    assert!(m.invariant("equivalence_bands").unwrap().passed);
}

#[test]
fn dissipation_plans_one_job_per_level() {
    let mut c = ExperimentConfig::new(ExperimentKind::Dissipation);
    c.levels = 4;
    let jobs = plan_jobs(&c.validated().unwrap());
    let dxs: Vec<f64> = jobs
        .iter()
        .map(|j| match j.task {
            Task::Dissipation { dx, .. } => dx,
            _ => panic!("{:?}", j.task),
        })
        .collect();
    assert_eq!(dxs, [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0]);
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::Picard, tmp.path(), "bad");
    c.iterations = 0;
    assert!(run_experiment(&c).is_err());
    assert!(!tmp.path().join("bad").exists());
}
