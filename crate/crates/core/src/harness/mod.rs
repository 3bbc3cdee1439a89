//! Config-driven experiment runs: training, evaluation and plotting.
//!
//! A run directory `<output_dir>/seed-<n>/` holds `manifest.json`,
//! `metrics.csv`, `summary.json`, `checkpoint/`, and `FAILED` when the run
//! stopped on an error.

mod config;
mod metrics;
mod plot;
mod run;

pub use config::{load_config, ExperimentConfig, OUTPUT_ROOT_VAR};
pub use metrics::{metrics_header, metrics_record, CsvMetrics, MetricsTable, METRICS_FILE};
pub use plot::{cmd_plot, group_curves, render_svg, CurveGroup};
pub use run::{
    cmd_eval, cmd_train, run_dir, EvalSummary, RunManifest, RunSummary, CHECKPOINT_DIR, EVAL_FILE,
    EVAL_SUMMARY_FILE, FAILED_FILE, MANIFEST_FILE, SOURCE_HASH, SUMMARY_FILE,
};
