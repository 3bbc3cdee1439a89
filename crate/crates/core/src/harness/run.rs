use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{evaluate, Algo, TrainerState};

use super::config::ExperimentConfig;
use super::metrics::{write_csv, CsvMetrics, METRICS_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FAILED_FILE: &str = "FAILED";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const EVAL_FILE: &str = "eval.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";

/// SHA-256 over this crate's source files at build time.
pub const SOURCE_HASH: &str = env!("CAR_SOURCE_HASH");

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub algo: Algo,
    pub config_hash: String,
    pub source_hash: String,
    pub version: String,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_slice(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iteration: u64,
    pub episode: u64,
    pub threshold_reached_at: Option<u64>,
    pub stopped_early: bool,
    pub lambdas: Vec<f64>,
    pub temperature: f64,
    pub error: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn run_dir(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config.resolved_output_dir().join(format!("seed-{seed}"))
}

/// Trains one seed. Partial outputs are kept on failure, marked by a
/// `FAILED` file holding the error message.
pub fn cmd_train(config: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    config.validate()?;
    let dir = run_dir(config, seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let failed = dir.join(FAILED_FILE);
    if failed.exists() {
        fs::remove_file(&failed).map_err(|e| Error::io(&failed, e))?;
    }
    write_json(
        &dir.join(MANIFEST_FILE),
        &RunManifest {
            config: config.clone(),
            seed,
            algo: config.algo,
            config_hash: config.content_hash()?,
            source_hash: SOURCE_HASH.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )?;

    let (mut env, spec) = config.build_problem()?;
    let mut sink = CsvMetrics::create(&dir.join(METRICS_FILE), spec.constraint_count())?;
    let mut state = TrainerState::new(env.as_ref(), &spec, config.trainer_for_seed(seed), config.algo)?;
    let outcome = state.run(env.as_mut(), &spec, &mut sink);
    let saved = state.save(&dir.join(CHECKPOINT_DIR), env.as_ref());
    write_json(
        &dir.join(SUMMARY_FILE),
        &RunSummary {
            iteration: state.iteration,
            episode: state.episode,
            threshold_reached_at: state.threshold_reached_at,
            stopped_early: state.stopped,
            lambdas: state.lagrange.lambdas().to_vec(),
            temperature: state.agent.temperature(),
            error: outcome.as_ref().err().map(|e| e.to_string()),
        },
    )?;
    if let Err(e) = outcome.and(saved) {
        fs::write(&failed, format!("{e}\n")).map_err(|io| Error::io(&failed, io))?;
        return Err(e);
    }
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub iteration: u64,
    pub mean_return: Option<f64>,
    pub mean_constraint_returns: Option<Vec<f64>>,
    /// Fraction of episodes whose discounted constraint return is nonnegative.
    pub constraint_satisfaction: Vec<f64>,
    pub median_final_segment: Option<f64>,
    pub mean_final_segment: Option<f64>,
    pub mean_final_value: Option<f64>,
}

/// Evaluates the run's checkpoint; writes per-episode rows and a summary.
pub fn cmd_eval(run: &Path, episodes: usize) -> Result<PathBuf> {
    let manifest = RunManifest::read(run)?;
    let (mut env, spec) = manifest.config.build_problem()?;
    let state = TrainerState::load(&run.join(CHECKPOINT_DIR), env.as_mut(), &spec)?;
    let report = evaluate(&state.agent, env.as_ref(), &spec, episodes, state.eval_seed())?;
    let m = spec.constraint_count();

    let mut header: Vec<String> = ["episode", "seed", "episode_return"].iter().map(|s| s.to_string()).collect();
    header.extend((0..m).map(|i| format!("constraint_return_{i}")));
    header.extend(["final_segment", "final_value"].iter().map(|s| s.to_string()));
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let rows: Vec<Vec<String>> = report
        .episodes
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let mut row = vec![k.to_string(), e.seed.to_string(), e.episode_return.to_string()];
            row.extend(e.constraint_returns.iter().map(|v| v.to_string()));
            row.extend([opt(e.final_segment), opt(e.final_value)]);
            row
        })
        .collect();
    let path = run.join(EVAL_FILE);
    write_csv(&path, &header, &rows)?;

    let n = report.episodes.len().max(1) as f64;
    write_json(
        &run.join(EVAL_SUMMARY_FILE),
        &EvalSummary {
            episodes: report.episodes.len(),
            iteration: state.iteration,
            mean_return: report.mean_return(),
            mean_constraint_returns: report.mean_constraint_returns(),
            constraint_satisfaction: (0..m)
                .map(|i| report.episodes.iter().filter(|e| e.constraint_returns[i] >= 0.0).count() as f64 / n)
                .collect(),
            median_final_segment: report.median_final_segment(),
            mean_final_segment: report.mean_final_segment(),
            mean_final_value: report.mean_final_value(),
        },
    )?;
    Ok(path)
}
