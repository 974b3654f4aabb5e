use std::path::Path;
use std::process::{Command, Output};

fn pdmp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdmp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("PDMP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

const TWO_STATE: &str = "[model]\nfamily = \"two_state_linear\"\n[model.params]\nhorizon = 2.0\n[sim]\nlambda = 25.0\n";

#[test]
fn simulate_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, TWO_STATE).unwrap();
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(pdmp(&["simulate", "--config", cfg, "--seed", "11"], &a).status.success());
    assert!(pdmp(&["simulate", "--config", cfg, "--seed", "11", "--threads", "1"], &b).status.success());
    for f in ["trajectory.csv", "jumps.csv", "summary.json", "config.toml"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    let c = dir.path().join("c");
    assert!(pdmp(&["simulate", "--config", cfg, "--seed", "12"], &c).status.success());
    assert_ne!(read(a.join("jumps.csv")), read(c.join("jumps.csv")));
}

#[test]
fn manifest_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, TWO_STATE).unwrap();
    let a = dir.path().join("a");
    assert!(pdmp(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5"], &a).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config"]["sim"]["lambda"], 25.0);

    let b = dir.path().join("b");
    let echo = a.join("config.toml");
    assert!(pdmp(&["simulate", "--config", echo.to_str().unwrap()], &b).status.success());
    assert_eq!(read(a.join("trajectory.csv")), read(b.join("trajectory.csv")));

    let c = dir.path().join("c");
    let manifest_path = a.join("manifest.json");
    assert!(pdmp(&["simulate", "--config", manifest_path.to_str().unwrap()], &c).status.success());
    assert_eq!(read(a.join("trajectory.csv")), read(c.join("trajectory.csv")));
}

#[test]
fn trajectory_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(pdmp(&["simulate"], &a).status.success());
    let text = read(a.join("trajectory.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x_1,sigma"));
    assert_eq!(lines.count(), 1001);
    assert!(read(a.join("jumps.csv")).starts_with("tau_k,sigma_before,sigma_after"));
}

#[test]
fn motor_phase_single_root_for_small_beta() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(pdmp(&["motor-phase"], &a).status.success());
    let text = read(a.join("phase.csv"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let bi = header.iter().position(|&h| h == "beta").unwrap();
    let ni = header.iter().position(|&h| h == "n_roots").unwrap();
    let mut betas = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let beta: f64 = cells[bi].parse().unwrap();
        let n: usize = cells[ni].parse().unwrap();
        betas.push(beta);
        if beta <= 4.0 {
            assert_eq!(n, 1, "{line}");
        }
    }
    assert_eq!(betas.first(), Some(&3.0));
    assert_eq!(betas.last(), Some(&10.0));
    // the default grid includes a bistable point
    assert!(text.lines().skip(1).any(|l| l.split(',').nth(ni) == Some("3")));
}

#[test]
fn motor_run_keeps_each_basin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.toml");
    std::fs::write(&cfg, "[motor_run]\nn_paths = 100\nhorizon = 2.0\n").unwrap();
    let a = dir.path().join("a");
    assert!(pdmp(&["motor-run", "--config", cfg.to_str().unwrap()], &a).status.success());
    let report: serde_json::Value = serde_json::from_str(&read(a.join("directionality.json"))).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["frac_left"].as_f64().unwrap() >= 0.95);
    assert!(rows[1]["frac_right"].as_f64().unwrap() >= 0.95);
}

#[test]
fn ldp_rate_reads_a_path_pair_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.toml");
    std::fs::write(&cfg, "[ldp_rate]\nrho = [0.8, 0.2]\ngrid_cells = 50\n").unwrap();
    let a = dir.path().join("a");
    assert!(pdmp(&["ldp-rate", "--config", cfg.to_str().unwrap()], &a).status.success());
    let first: serde_json::Value = serde_json::from_str(&read(a.join("summary.json"))).unwrap();
    // constant ρ against unit rates: (√0.8 − √0.2)² per unit time
    let expected = (0.8f64.sqrt() - 0.2f64.sqrt()).powi(2);
    assert!((first["rate"].as_f64().unwrap() - expected).abs() < 1e-8, "{first}");

    std::fs::copy(a.join("path_pair.csv"), dir.path().join("pair.csv")).unwrap();
    std::fs::write(&cfg, "[ldp_rate]\npair = \"pair.csv\"\n").unwrap();
    let b = dir.path().join("b");
    assert!(pdmp(&["ldp-rate", "--config", cfg.to_str().unwrap()], &b).status.success());
    assert_eq!(read(a.join("rate_sweep.csv")), read(b.join("rate_sweep.csv")));
}

#[test]
fn tilt_and_coarse_produce_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.toml");
    std::fs::write(
        &cfg,
        "[tilt]\npotentials = [0.0, -0.2]\nn_paths = 50\n[coarse]\nlambdas = [10.0, 20.0]\nn_paths = 40\n",
    )
    .unwrap();
    let a = dir.path().join("a");
    assert!(pdmp(&["tilt", "--config", cfg.to_str().unwrap()], &a).status.success());
    assert_eq!(read(a.join("weights.csv")).lines().count(), 51);

    std::fs::write(
        &cfg,
        "[model]\nfamily = \"motor3\"\n[coarse]\nlambdas = [10.0, 20.0]\nn_paths = 40\n",
    )
    .unwrap();
    let b = dir.path().join("b");
    assert!(pdmp(&["coarse", "--config", cfg.to_str().unwrap()], &b).status.success());
    let csv = read(b.join("coarse.csv"));
    assert!(csv.starts_with("lambda,ks_T1,sup_dev"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_config_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[sim]\nlambda = 3.0\nseeed = 1\n").unwrap();
    let a = dir.path().join("a");
    let out = pdmp(&["simulate", "--config", cfg.to_str().unwrap()], &a);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["line"], 3);
    assert!(a.join("error.json").exists());
}

#[test]
fn runtime_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nfamily = \"nope\"\n").unwrap();
    let out = pdmp(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown model family"));

    std::fs::write(&cfg, "[model.params]\nhorizon = -1.0\n").unwrap();
    let out = pdmp(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_pdmp"))
        .arg("motor-phase")
        .env("PDMP_OUT_DIR", &target)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(target.join("phase.csv").exists());
}
