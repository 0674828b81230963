use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dampwave::harness::{load_config, run_experiment, Manifest};

fn dampwave(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dampwave"));
    cmd.args(args).env_remove("DAMPWAVE_OUT");
    if let Some(p) = env_out {
        cmd.env("DAMPWAVE_OUT", p);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn phi_writes_tables_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = dampwave(&["phi", "--mu0", "1", "--rmax", "50", "--out-dir", out], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("phi_checks");
    let csv = fs::read_to_string(dir.join("job-000/phi.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("r,"));
    assert!(manifest(&dir).passed);
}

#[test]
fn failed_invariant_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let args = [
        "decay",
        "--mu0",
        "0.5",
        "--t-end",
        "60",
        "--window",
        "10,60",
        "--decay-floor",
        "4",
        "--out-dir",
        out,
    ];
    let o = dampwave(&args, None);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&dampwave(&["phi", "--bogus", "1"], None)), 2);
    assert_eq!(code(&dampwave(&["nonsense"], None)), 2);
    let o = dampwave(&["simulate", "--cfl", "3", "--mu0=-1", "--out-dir", out], None);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("cfl") && err.contains("mu0"), "{err}");
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "kind = \"simulate\"\nmu0 = 0.25\nt_end = 3.0\nname = \"from-file\"\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = dampwave(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--mu0",
            "0.75",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stored = load_config(&out.join("from-file/config.toml")).unwrap();
    assert_eq!(stored.mu0, Some(0.75));
    assert_eq!(stored.t_end, Some(3.0));

    let o = dampwave(&["phi", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn environment_sets_default_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dampwave(&["simulate", "--t-end", "2"], Some(tmp.path()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("simulate/manifest.json").is_file());

    let cfg = tmp.path().join("c.toml");
    let elsewhere = tmp.path().join("file-out");
    fs::write(
        &cfg,
        format!(
            "kind = \"simulate\"\nt_end = 2.0\nout_dir = {:?}\n",
            elsewhere.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = dampwave(&["simulate", "--config", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(code(&o), 0);
    assert!(elsewhere.join("simulate/manifest.json").is_file());
}

#[test]
fn cli_matches_direct_harness_call() {
    let tmp = tempfile::tempdir().unwrap();
    let cli_out = tmp.path().join("cli");
    let o = dampwave(
        &[
            "lifespan",
            "--mu0",
            "0.5",
            "--p",
            "2",
            "--eps-ladder",
            "6",
            "--out-dir",
            cli_out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = cli_out.join("lifespan_sweep");
    let mut config = load_config(&dir.join("config.toml")).unwrap();
    config.out_dir = tmp.path().join("lib");
    let m = run_experiment(&config).unwrap();
    for f in m.artifacts.iter().filter(|f| *f != "config.toml") {
        assert_eq!(
            fs::read(dir.join(f)).unwrap(),
            fs::read(m.directory.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(manifest(&dir).invariants, m.invariants);
}

#[test]
fn verify_runs_the_fast_tier() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dampwave(&["verify", "--out-dir", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(tmp.path().join("verify-picard/job-000/picard.json").is_file());
}
