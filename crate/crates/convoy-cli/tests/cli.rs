//! End-to-end tests of the convoy binary: exit codes, file outputs, flag
//! precedence, campaign aggregation and the worked scheduling example.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn convoy() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convoy"))
}

fn repo_docs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small fast config: the reference scenario trimmed to a short clock.
fn small_config(dir: &Path, max_sim_time_s: f64) -> PathBuf {
    let mut cfg = convoy::config::standard_scenario(
        6.0,
        convoy::config::standard_optimized_policy(),
        7,
    );
    cfg.max_sim_time_s = max_sim_time_s;
    let path = dir.join("world.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

#[test]
fn solve_reports_worked_example_replacement() {
    let out = convoy()
        .args(["solve", "--problem"])
        .arg(repo_docs().join("replacement_demo.toml"))
        .output()
        .unwrap();
    assert!(out.status.success(), "solve failed: {out:?}");
    let text = stdout(&out);
    assert!(text.contains("leaving {1}"), "stdout: {text}");
    assert!(text.contains("entering {2}"), "stdout: {text}");
    println!("criterion 08 PASS: solve subcommand reports leaving {{1}}, entering {{2}}");
}

#[test]
fn solve_infeasible_exits_2_with_wait_message() {
    let dir = tempfile::tempdir().unwrap();
    // Forced leaver (over threshold) with an empty hub: nothing can enter.
    let problem = r#"
n_robots = 3
horizon_k = 1
formation_size_f = 2
d0 = [1100.0, 0.0, 0.0]
x0 = [1, 1, 0]
hub_presence = [[0, 0, 0]]
r_c = -25.0
r_d = 50.0
d_th = 800.0
capacity_mah = 1200.0
w1 = 1.0
w2 = 0.5
"#;
    let path = dir.path().join("infeasible.toml");
    fs::write(&path, problem).unwrap();
    let out = convoy().args(["solve", "--problem"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("waiting for replacement"));
}

#[test]
fn solve_all_robots_needed_is_all_active() {
    let dir = tempfile::tempdir().unwrap();
    let problem = r#"
n_robots = 2
horizon_k = 1
formation_size_f = 2
d0 = [100.0, 200.0]
x0 = [1, 1]
hub_presence = [[0, 0]]
r_c = -25.0
r_d = 50.0
d_th = 1200.0
capacity_mah = 1200.0
w1 = 1.0
w2 = 0.5
"#;
    let path = dir.path().join("tight.toml");
    fs::write(&path, problem).unwrap();
    let out = convoy().args(["solve", "--problem"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("x1 = [1, 1]"));
}

#[test]
fn run_missing_config_fails_with_diagnostic() {
    let out = convoy()
        .args(["run", "--config", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not/here.toml"), "stderr: {err}");
}

#[test]
fn run_writes_outputs_and_honors_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 400.0);
    let out_dir = dir.path().join("out");
    let out = convoy()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--payload-mass", "9.5", "--seed", "21", "--policy", "baseline30"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    for name in ["ticks.csv", "replacements.csv", "summary.toml"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    // Overrides echoed in the summary record.
    let summary = fs::read_to_string(out_dir.join("summary.toml")).unwrap();
    assert!(summary.contains("payload_mass_kg = 9.5"), "{summary}");
    assert!(summary.contains("seed = 21"), "{summary}");
    assert!(summary.contains("baseline30"), "{summary}");
    // Fixed per-tick header.
    let ticks = fs::read_to_string(out_dir.join("ticks.csv")).unwrap();
    assert!(ticks.starts_with("time_s,robot_id,role,voltage_v,discharge_mah,x_m,y_m\n"));
}

#[test]
fn run_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 600.0);
    for sub in ["a", "b"] {
        let out = convoy()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(sub))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = fs::read(dir.path().join("a/ticks.csv")).unwrap();
    let b = fs::read(dir.path().join("b/ticks.csv")).unwrap();
    assert!(a == b, "per-tick CSVs differ between identical runs");
}

fn small_campaign_text(max_sim_time_s: f64) -> String {
    let mut base = convoy::config::standard_scenario(6.0, convoy::PolicyConfig::None, 1);
    base.max_sim_time_s = max_sim_time_s;
    let base_toml = base.to_toml_string().unwrap();
    let indented: String = base_toml
        .lines()
        .map(|l| {
            if let Some(rest) = l.strip_prefix("[[") {
                format!("[[base.{rest}")
            } else if let Some(rest) = l.strip_prefix('[') {
                format!("[base.{rest}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        r#"
payload_masses_kg = [6.0]
seeds = [1]
max_cells = 16

[[policies]]
kind = "none"

[[policies]]
kind = "baseline"
threshold_fraction = 0.30

[[policies]]
kind = "optimized"
horizon_k = 2
w1 = 1.0
w2 = 80.0
d_th_mah = 1080.0

[base]
{indented}
"#
    )
}

#[test]
fn small_campaign_aggregates_three_rows_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("campaign.toml");
    fs::write(&path, small_campaign_text(1200.0)).unwrap();
    for sub in ["one", "two"] {
        let out = convoy()
            .args(["campaign", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(dir.path().join(sub))
            .args(["--jobs", "2"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{out:?}");
    }
    let runs = fs::read_to_string(dir.path().join("one/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4, "header plus three cells: {runs}");
    for file in [
        "runs.csv",
        "operating_time_by_mass.csv",
        "replacement_counts_by_mass.csv",
        "replacement_charge_histogram.csv",
    ] {
        let a = fs::read(dir.path().join("one").join(file)).unwrap();
        let b = fs::read(dir.path().join("two").join(file)).unwrap();
        assert!(a == b, "{file} differs between identical campaigns");
    }
}

#[test]
fn paper_scale_campaign_completes_80_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = convoy()
        .args(["campaign", "--config"])
        .arg(repo_docs().join("standard_campaign.toml"))
        .arg("--out")
        .arg(&out_dir)
        .args(["--jobs", "4"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 81, "header plus 80 cells");
    // 4 masses x 4 policies aggregated.
    let agg = fs::read_to_string(out_dir.join("operating_time_by_mass.csv")).unwrap();
    assert_eq!(agg.lines().count(), 17);
    let profiles = fs::read_dir(out_dir.join("profiles")).unwrap().count();
    assert_eq!(profiles, 80);
}

#[test]
fn campaign_cell_cap_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_campaign_text(600.0).replace("max_cells = 16", "max_cells = 2");
    let path = dir.path().join("campaign.toml");
    fs::write(&path, text).unwrap();
    let out = convoy()
        .args(["campaign", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_cells"));
}
