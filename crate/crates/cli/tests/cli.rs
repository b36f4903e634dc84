use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

fn mreach(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mreach"));
    cmd.args(args).env_remove("MREACH_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("mreach runs")
}

fn run(sub: &str, name: &str, out: &Path, extra: &[&str]) -> Output {
    let sc = scenario(name);
    let mut args = vec![sub, "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    mreach(&args, &[])
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn verify_nonrandom_emits_target_deficit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("verify", "sv_a_nonrandom", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&dir.path().join("verification.json"));
    assert_eq!(report["passed"], false);
    assert_eq!(report["certificate"]["kind"], "target_deficit");
    let r = report["certificate"]["residual"].as_f64().unwrap();
    assert!((r - 0.274_253_117_750_073_6).abs() < 1e-12);
    assert!(dir.path().join("trace_components.csv").exists());
}

#[test]
fn simulate_noise_free_is_sure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("simulate", "noise_free_feasible", dir.path(), &["--n", "20000", "--dump-trajectories"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("simulation_report.json"));
    assert_eq!(report["report"]["reach_avoid_estimate"], 1.0);
    assert_eq!(report["report"]["n"], 20000);
    let rows = csv_rows(&dir.path().join("trajectories.csv"));
    assert_eq!(rows[0], ["trajectory_id", "step", "x"]);
    assert_eq!(rows.len(), 1 + 2 * 20000);
    assert_eq!(rows[2][2].parse::<f64>().unwrap(), -2.1);
}

#[test]
fn synthesize_random_saturates() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("synthesize", "sv_b_random", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&dir.path().join("synthesis_report.json"));
    assert_eq!(report["policy"][0]["feedforward"], -0.1);
    assert_eq!(report["policy"][0]["gain"], 0.0);
    assert_eq!(report["saturated"][0], true);
    let kinds: Vec<&str> = report["certificates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"target_deficit"), "{kinds:?}");
}

#[test]
fn feasible_set_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("feasible-set", "noise_free_feasible_set", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("feasible_set.csv"));
    assert_eq!(rows.len(), 1 + 121);
    let feasible = rows.iter().skip(1).filter(|r| r[7] == "feasible").count();
    assert_eq!(feasible, 64);
    let grid = json(&dir.path().join("feasible_set.json"));
    assert_eq!(grid["family"], "single_gaussian");
}

#[test]
fn export_figures_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("export-figures", "sv_a_nonrandom", dir.path(), &["--sigmas", "0.2,0.05,0.005"]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["reference.csv", "cdf_sigma_0.2.csv", "cdf_sigma_0.05.csv", "cdf_sigma_0.005.csv"] {
        let rows = csv_rows(&dir.path().join(f));
        assert_eq!(rows.len(), 1002, "{f}");
        assert_eq!(rows[0][0], "grid_x");
    }

    let dir = tempfile::tempdir().unwrap();
    let out = run("export-figures", "sv_a_nonrandom", dir.path(), &["--sigmas"]);
    assert_eq!(out.status.code(), Some(0));
    let mut files: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f.ends_with(".csv"))
        .collect();
    files.sort();
    assert_eq!(files, ["reference.csv"]);
}

#[test]
fn export_random_reference_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("export-figures", "sv_b_random", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("reference.csv"));
    let col = rows[0].iter().position(|h| h == "target_reference").unwrap();
    let mut levels: Vec<(f64, f64)> = rows
        .iter()
        .skip(1)
        .map(|r| (r[0].parse().unwrap(), r[col].parse().unwrap()))
        .collect();
    levels.dedup_by(|a, b| a.1 == b.1);
    let steps: Vec<f64> = levels.iter().map(|l| l.1).collect();
    assert_eq!(steps, [0.0, 0.8, 1.0]);
    assert_eq!(levels[1].0, -1.0);
    assert_eq!(levels[2].0, -0.5);
}

#[test]
fn propagate_writes_cdf_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("propagate", "sv_a_nonrandom", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("trace_cdf.csv"));
    assert_eq!(rows[0], ["step", "grid_x", "cdf_value"]);
    assert_eq!(rows.len(), 1 + 2 * 1001);
}

#[test]
fn malformed_scenario_names_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("sv_a_nonrandom"))
        .unwrap()
        .replace("\"dt\": 1.0", "\"dt\": \"one\"");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let out = mreach(
        &["verify", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("system.dt") && err.contains("line 5"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mreach(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(mreach(&["verify"], &[]).status.code(), Some(1));
    assert_eq!(mreach(&["--help"], &[]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let out = run("feasible-set", "sv_a_nonrandom", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let sc = scenario("sv_a_nonrandom");
    let out = mreach(
        &["simulate", "--scenario", sc.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[("MREACH_THREADS", "zero")],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn thread_count_does_not_change_results() {
    let sc = scenario("sv_b_random");
    let read = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = mreach(
            &[
                "simulate",
                "--scenario",
                sc.to_str().unwrap(),
                "--out",
                dir.path().to_str().unwrap(),
                "--n",
                "20000",
                "--seed",
                "9",
            ],
            &[("MREACH_THREADS", threads)],
        );
        assert_eq!(out.status.code(), Some(2));
        std::fs::read(dir.path().join("simulation_report.json")).unwrap()
    };
    assert_eq!(read("1"), read("4"));
}

#[test]
fn bundled_scenarios_are_canonical() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = mreach_core::Scenario::from_json(&text).unwrap();
        assert_eq!(parsed.to_json(), text, "{}", path.display());
    }
}
