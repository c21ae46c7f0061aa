use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use meanq_lab::runner::{CHECKPOINT_HEADER, CROSS_RUN_HEADER, PROBE_HEADER};
use meanq_lab::RunManifest;

const CONFIG: &str = r#"
# small end-to-end run
variant = "avg_dqn"
seeds = [1, 2]
total_steps = 400
eval_every = 200
eval_episodes = 2
s0_resets = 2
max_episode_steps = 30

[environment]
name = "chain_walk"
n = 4
gamma = 0.9

[learner]
ensemble_size = 3
batch_size = 8
warmup = 40
learning_rate = 0.1
optimizer = { kind = "sgd" }
model = { kind = "table" }

[exploration]
kind = "ucb"
lambda = 0.5
"#;

fn meanq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanq")).args(args).output().expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("out");
    let run = meanq(&["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "-j", "1"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seeds.len(), 2);
    assert!(manifest.seeds.iter().all(|s| s.ok));
    assert_eq!(header(&out.join("seed-1.csv")), CHECKPOINT_HEADER.join(","));
    assert_eq!(header(&out.join("seed-2-s0.csv")), PROBE_HEADER.join(","));
    assert_eq!(header(&out.join("cross_run.csv")), CROSS_RUN_HEADER.join(","));
    let rows = fs::read_to_string(out.join("seed-1.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 3);
    assert!(out.join("config.toml").exists());

    let csv = dir.path().join("summary.csv");
    let manifest_path = out.join("manifest.json");
    let summary = meanq(&["summarize", manifest_path.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(summary.status.success(), "{}", String::from_utf8_lossy(&summary.stderr));
    let table = String::from_utf8(summary.stdout).unwrap();
    assert!(table.contains("avg_dqn"), "{table}");
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 2);
}

#[test]
fn seed_override_runs_one_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("out");
    let run = meanq(&["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "--seed", "9"]);
    assert!(run.status.success());
    assert!(out.join("seed-9.csv").exists());
    assert!(!out.join("seed-1.csv").exists());
}

#[test]
fn invalid_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, CONFIG.replace("ensemble_size = 3", "ensemble_size = 1")).unwrap();
    let run = meanq(&["run", config.to_str().unwrap()]);
    assert!(!run.status.success());
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("line 17"), "{stderr}");
}

#[test]
fn oracle_prints_optimal_values() {
    let out = meanq(&["oracle", "chain_walk:n=3,gamma=0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let first: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(first, ["0", "0.250000", "0.500000", "0.500000", "1"]);
    assert!(!meanq(&["oracle", "no_such_env"]).status.success());
}
