//! Experiment configs, sweeps and reports.

pub mod config;
pub mod report;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, Provenance};
pub use report::{emit_heatmap, write_json_artifact};
pub use sweep::{rank_settings, run_sweep, SweepResult, SweepRow};

pub const OUT_ENV: &str = "POLISUM_OUT";

/// `output_dir/{domain}/{experiment}`.
pub fn experiment_dir(output_dir: &Path, domain: &str, experiment: &str) -> PathBuf {
    output_dir.join(domain).join(experiment)
}
