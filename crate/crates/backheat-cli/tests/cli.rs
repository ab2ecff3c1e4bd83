//! End-to-end tests against the built binary: exit-code contract, artifact
//! shapes, determinism and the verification suite's fault detection.

use std::path::Path;
use std::process::{Command, Output};

fn backheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backheat"))
        .args(args)
        .output()
        .expect("spawn backheat")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn scenario_solve_converges_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = backheat(&[
        "solve",
        "--scenario",
        "classic-single-mode",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    for file in [
        "run.csv",
        "manifest.json",
        "solution.json",
        "solution.csv",
        "reference.json",
        "samples.csv",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }

    let manifest = read_json(&dir.path().join("manifest.json"));
    let k_stop = manifest["run"]["k_stop"].as_u64().unwrap();
    let final_error = manifest["run"]["final_error"].as_f64().unwrap();
    assert!(k_stop <= 60, "k_stop {k_stop}");
    assert!(final_error < 1e-8, "final error {final_error}");
    assert_eq!(manifest["resolved"]["reference"], "generator");

    // the solution approximates sin t: its sample at the midpoint of the
    // positive half-interval is close to sin(pi/2) = 1
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let mid: Vec<&str> = samples.lines().collect();
    assert_eq!(mid[0], "t,value");
}

#[test]
fn zero_data_stops_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let out = backheat(&[
        "solve",
        "--scenario",
        "classic-single-mode",
        "--set",
        "data.amplitude=0.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["run"]["k_stop"].as_u64().unwrap(), 1);
    let solution = std::fs::read_to_string(dir.path().join("solution.json")).unwrap();
    let coef: Vec<f64> = serde_json::from_str(solution.trim()).unwrap();
    assert!(coef.iter().all(|&c| c == 0.0));
}

#[test]
fn inadmissible_gamma_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = backheat(&[
        "solve",
        "--scenario",
        "classic-single-mode",
        "--set",
        "problem.gamma=6.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("admissible interval"), "{err}");
}

#[test]
fn gamma_between_strict_and_loose_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    // strict bound is e ≈ 2.718, loose is 2e ≈ 5.44: γ = 3 runs but is flagged
    let out = backheat(&[
        "solve",
        "--scenario",
        "classic-single-mode",
        "--set",
        "problem.gamma=3.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["resolved"]["injectivity_bound_exceeded"], true);

    // γ = 1 is inside the strict bound: not flagged
    let dir2 = tempfile::tempdir().unwrap();
    let out = backheat(&[
        "solve",
        "--scenario",
        "classic-single-mode",
        "--out",
        dir2.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = read_json(&dir2.path().join("manifest.json"));
    assert_eq!(manifest["resolved"]["injectivity_bound_exceeded"], false);
}

#[test]
fn verify_passes_and_is_deterministic() {
    let a = backheat(&["verify"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let out_a = stdout(&a);
    assert!(out_a.contains("9/9 checks passed"), "{out_a}");
    let b = backheat(&["verify"]);
    assert_eq!(stdout(&b), out_a);
}

#[test]
fn verify_detects_injected_fault() {
    let out = backheat(&["verify", "--inject-fault", "energy-sign"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("energy-identity"));
    assert!(stderr(&out).contains("energy-identity"));
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const PROP1_SWEEP: &str = r#"
[problem]
n_modes = 64

[data]
generator = "single-mode"
amplitude = 0.36787944117144233

[noise]
eps = [0.1, 0.0316, 0.01, 0.00316, 0.001]
profile = "white"
seeds = [1, 2]

[stopping]
mu = 1.5
max_iter = 100000
"#;

#[test]
fn sweep_checks_bounds_and_is_deterministic_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PROP1_SWEEP);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");

    let run1 = backheat(&["sweep", "--config", &cfg, "--out", out1.to_str().unwrap()]);
    assert_eq!(run1.status.code(), Some(0), "{}", stderr(&run1));
    let run2 = backheat(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out2.to_str().unwrap(),
        "--parallel",
        "4",
    ]);
    assert_eq!(run2.status.code(), Some(0), "{}", stderr(&run2));

    let csv1 = std::fs::read(out1.join("sweep.csv")).unwrap();
    let csv2 = std::fs::read(out2.join("sweep.csv")).unwrap();
    assert_eq!(csv1, csv2, "sweep output depends on execution order");

    let csv = String::from_utf8(csv1).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
    assert!(csv.starts_with(
        "eps,seed,mu,gamma,p,schedule,k_stop,stopped_by,final_residual,final_error,sum_bound_rhs"
    ));

    let rates = read_json(&out1.join("rates.json"));
    assert_eq!(rates["bound_checks"]["violations"], 0);
    assert_eq!(rates["bound_checks"]["evaluated"], 10);
    assert_eq!(rates["tainted"], false);
}

#[test]
fn short_eps_grid_sweeps_but_skips_fits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[data]
amplitude = 0.36787944117144233

[noise]
eps = [0.01]
seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
"#,
    );
    let out_dir = dir.path().join("o");
    let out = backheat(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11, "one row per seed plus header");
    assert!(csv.lines().skip(1).all(|l| l.starts_with("0.01,")));
    let rates = read_json(&out_dir.join("rates.json"));
    assert!(
        rates["k_fit"].is_null(),
        "too few levels for a fit: {rates}"
    );

    // same config, same bytes
    let out_dir2 = dir.path().join("o2");
    let out = backheat(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out_dir2.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(out_dir.join("sweep.csv")).unwrap(),
        std::fs::read(out_dir2.join("sweep.csv")).unwrap()
    );
}

const SOURCE_SWEEP: &str = r#"
[problem]
n_modes = 64
spectrum = "sqrt-index"

[data]
generator = "source-condition"
p = 1.0
seed = 11
scale = 10.0

[noise]
eps = [0.1, 0.01, 0.001, 0.0001]
profile = "white"
seeds = [1]

[stopping]
mu = 2.5
max_iter = 100000
"#;

#[test]
fn source_condition_sweep_recovers_log_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SOURCE_SWEEP);
    let out = backheat(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rates = read_json(&dir.path().join("o/rates.json"));
    assert_eq!(
        rates["source_exponent_within_30pct"], true,
        "rates: {rates}"
    );
    let q = rates["error_fit"]["q"].as_f64().unwrap();
    assert!(q > 0.0, "decay exponent should be positive, got {q}");
}

#[test]
fn source_condition_sweep_rejects_small_mu() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SOURCE_SWEEP);
    let out = backheat(&[
        "sweep",
        "--config",
        &cfg,
        "--set",
        "stopping.mu=1.5",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mu > 2"), "{}", stderr(&out));
}

#[test]
fn gen_then_solve_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let gen_dir = dir.path().join("gen");
    let cfg = write_config(
        dir.path(),
        r#"
[problem]
n_modes = 16

[data]
generator = "single-mode"
mode = 2
amplitude = 0.5
"#,
    );
    let out = backheat(&["gen", "--config", &cfg, "--out", gen_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(gen_dir.join("data.json").exists());
    assert!(gen_dir.join("data.csv").exists());
    assert!(gen_dir.join("reference.json").exists());

    let data_path = gen_dir.join("data.json");
    let solve_cfg = write_config(
        &dir.path().join("."),
        &format!(
            r#"
[problem]
n_modes = 16

[data]
generator = "file"
path = "{}"

[stopping]
max_iter = 20000
residual_tol = 1e-9
"#,
            data_path.to_str().unwrap()
        ),
    );
    let solve_dir = dir.path().join("solve");
    let out = backheat(&[
        "solve",
        "--config",
        &solve_cfg,
        "--out",
        solve_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = read_json(&solve_dir.join("manifest.json"));
    assert_eq!(manifest["run"]["stop_reason"], "residual-tol");
}

#[test]
fn oracle_reference_is_gated_and_reports_overflow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[problem]
n_modes = 64

[data]
generator = "rough"

[stopping]
max_iter = 50

[output]
reference = "oracle"
"#,
    );
    // without the acknowledgment: config error
    let out = backheat(&[
        "solve",
        "--config",
        &cfg,
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--allow-oracle"), "{}", stderr(&out));

    // with it: the inversion is attempted and its overflow reported
    let out = backheat(&[
        "solve",
        "--config",
        &cfg,
        "--allow-oracle",
        "--out",
        dir.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("overflow"), "{}", stderr(&out));
}

#[test]
fn cap_is_recorded_when_max_iter_hits() {
    let dir = tempfile::tempdir().unwrap();
    let out = backheat(&[
        "solve",
        "--scenario",
        "classic-single-mode",
        "--set",
        "stopping.max_iter=5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["run"]["stop_reason"], "cap");
    assert_eq!(manifest["run"]["k_stop"].as_u64().unwrap(), 5);
}

#[test]
fn solve_requires_config_or_scenario() {
    let out = backheat(&["solve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn noisy_solve_stops_by_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let out = backheat(&[
        "solve",
        "--scenario",
        "classic-single-mode",
        "--set",
        "noise.eps=[0.001]",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["run"]["stop_reason"], "discrepancy");
    assert_eq!(manifest["resolved"]["eps_used"].as_f64().unwrap(), 0.001);
    // stopped at or below the discrepancy threshold μ·ε
    let final_residual = manifest["run"]["final_residual"].as_f64().unwrap();
    assert!(final_residual <= 1.5 * 0.001, "residual {final_residual}");
}

#[test]
fn seed_flag_controls_noise_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = backheat(&[
            "solve",
            "--scenario",
            "classic-single-mode",
            "--set",
            "noise.eps=[0.01]",
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        std::fs::read(out_dir.join("run.csv")).unwrap()
    };
    let a = run("7", "a");
    let b = run("7", "b");
    let c = run("8", "c");
    assert_eq!(a, b, "same seed must reproduce the run exactly");
    assert_ne!(a, c, "different seeds should perturb differently");
}
