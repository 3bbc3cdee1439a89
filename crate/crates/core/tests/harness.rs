use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use car_core::harness::{
    cmd_eval, cmd_plot, cmd_train, metrics_header, ExperimentConfig, MetricsTable, RunManifest, CHECKPOINT_DIR,
    EVAL_FILE, FAILED_FILE, METRICS_FILE, OUTPUT_ROOT_VAR, SUMMARY_FILE,
};
use car_core::Error;

fn config_text(algo: &str, output_dir: &Path) -> String {
    format!(
        r#"
env = "pendulum"
algo = "{algo}"
seeds = [0, 1]
output_dir = "{}"

[[constraints]]
name = "upright"
kind = "episode-value"
epsilon = 0.01
value_fn = "abs-angle"

[trainer]
hidden_width = 8
hidden_layers = 1
quantiles = 4
batch_size = 16
warmup_steps = 50
total_iterations = 450
multiplier_interval = 200
eval_interval = 200
eval_episodes = 2
"#,
        output_dir.display()
    )
}

fn config(algo: &str, output_dir: &Path) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&config_text(algo, output_dir)).unwrap()
}

fn car() -> Command {
    Command::new(env!("CARGO_BIN_EXE_car"))
}

#[test]
fn identical_config_and_seed_give_identical_metrics() {
    let root = tempfile::tempdir().unwrap();
    let a = cmd_train(&config("qrsac-l", &root.path().join("a")), 3).unwrap();
    let b = cmd_train(&config("qrsac-l", &root.path().join("b")), 3).unwrap();
    let (ma, mb) = (fs::read(a.join(METRICS_FILE)).unwrap(), fs::read(b.join(METRICS_FILE)).unwrap());
    assert!(!ma.is_empty());
    assert_eq!(ma, mb);
    assert_eq!(fs::read(a.join(SUMMARY_FILE)).unwrap(), fs::read(b.join(SUMMARY_FILE)).unwrap());
    let c = cmd_train(&config("qrsac-l", &root.path().join("c")), 4).unwrap();
    assert_ne!(ma, fs::read(c.join(METRICS_FILE)).unwrap());
}

#[test]
fn run_directory_holds_all_artifacts() {
    let root = tempfile::tempdir().unwrap();
    let cfg = config("sac-l", root.path());
    let dir = cmd_train(&cfg, 1).unwrap();
    assert_eq!(dir, root.path().join("seed-1"));
    for f in [METRICS_FILE, SUMMARY_FILE, "manifest.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(dir.join(CHECKPOINT_DIR).join("checkpoint.tensors").is_file());
    assert!(!dir.join(FAILED_FILE).exists());
    let manifest = RunManifest::read(&dir).unwrap();
    assert_eq!(manifest.seed, 1);
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.source_hash.len(), 64);
    let table = MetricsTable::read(&dir.join(METRICS_FILE)).unwrap();
    assert_eq!(table.header, metrics_header(1));
    let kinds: Vec<&str> = table.rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(kinds, ["multiplier-skipped", "eval", "multiplier", "eval"]);
}

#[test]
fn failure_leaves_a_marker_and_partial_outputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = config("qrsac-l", root.path());
    let dir = root.path().join("seed-0");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(CHECKPOINT_DIR), "not a directory").unwrap();
    let err = cmd_train(&cfg, 0).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    let marker = fs::read_to_string(dir.join(FAILED_FILE)).unwrap();
    assert!(!marker.trim().is_empty());
    assert!(dir.join(METRICS_FILE).is_file());

    fs::remove_file(dir.join(CHECKPOINT_DIR)).unwrap();
    cmd_train(&cfg, 0).unwrap();
    assert!(!dir.join(FAILED_FILE).exists());
}

#[test]
fn eval_writes_one_row_per_episode() {
    let root = tempfile::tempdir().unwrap();
    let dir = cmd_train(&config("qrsac-l", root.path()), 0).unwrap();
    let path = cmd_eval(&dir, 10).unwrap();
    assert_eq!(path, dir.join(EVAL_FILE));
    let table = MetricsTable::read(&path).unwrap();
    assert_eq!(table.rows.len(), 10);
    assert!(table.column("final_segment").is_some());
    let again = fs::read(&path).unwrap();
    cmd_eval(&dir, 10).unwrap();
    assert_eq!(again, fs::read(&path).unwrap());
}

#[test]
fn plot_draws_a_band_per_multi_seed_group() {
    let root = tempfile::tempdir().unwrap();
    let mut runs: Vec<PathBuf> = Vec::new();
    for algo in ["qrsac-l", "sac-l"] {
        let cfg = config(algo, &root.path().join(algo));
        for seed in [0, 1] {
            runs.push(cmd_train(&cfg, seed).unwrap());
        }
    }
    let out = root.path().join("plots").join("task.svg");
    let (svg, table) = cmd_plot(&runs, "task-metric", &out).unwrap();
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polygon").count(), 2);
    assert!(text.contains("qrsac-l") && text.contains("sac-l"));
    let t = MetricsTable::read(&table).unwrap();
    assert_eq!(t.header[0], "iteration");
    assert!(t.column("qrsac-l_mean").is_some() && t.column("sac-l_max").is_some());
    assert_eq!(t.rows.len(), 2);

    assert!(cmd_plot(&[], "task-metric", &out).is_err());
    let err = cmd_plot(&runs, "no-such-metric", &out).unwrap_err().to_string();
    assert!(err.contains("task_metric"), "{err}");
}

#[test]
fn cli_trains_evaluates_and_plots() {
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("exp.toml");
    fs::write(&cfg_path, config_text("qrsac-l", &root.path().join("runs"))).unwrap();
    let out = car().args(["train", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(printed.lines().count(), 2);
    let run0 = root.path().join("runs").join("seed-0");
    assert!(run0.is_dir() && root.path().join("runs").join("seed-1").is_dir());

    let out = car().args(["eval", "--episodes", "3", "--run"]).arg(&run0).output().unwrap();
    assert!(out.status.success());
    assert_eq!(MetricsTable::read(&run0.join(EVAL_FILE)).unwrap().rows.len(), 3);

    let svg = root.path().join("p.svg");
    let out = car()
        .args(["plot", "--metric", "lambda-0", "--out"])
        .arg(&svg)
        .arg("--runs")
        .arg(&run0)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(svg.is_file());
}

#[test]
fn cli_exit_codes_follow_error_category() {
    let root = tempfile::tempdir().unwrap();
    let missing = car().args(["train", "--config"]).arg(root.path().join("none.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(5));

    let bad = root.path().join("bad.toml");
    fs::write(&bad, config_text("qrsac-l", root.path()) + "\nfoo = 1\n").unwrap();
    let out = car().args(["train", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let unknown = root.path().join("unknown.toml");
    fs::write(&unknown, config_text("qrsac-l", root.path()).replace("abs-angle", "tilt")).unwrap();
    let out = car().args(["train", "--config"]).arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = car().args(["eval", "--run"]).arg(root.path().join("nowhere")).output().unwrap();
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn output_root_prefixes_relative_directories() {
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("exp.toml");
    let text = config_text("sac-l", Path::new("relative/out")).replace("seeds = [0, 1]", "seeds = [2]");
    fs::write(&cfg_path, text).unwrap();
    let out_root = root.path().join("outputs");
    let out = car()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .current_dir(root.path())
        .env(OUTPUT_ROOT_VAR, &out_root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_root.join("relative/out/seed-2").join(METRICS_FILE).is_file());
    assert!(!root.path().join("relative").exists());
}
