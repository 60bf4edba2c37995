//! Replicate sweeps over tasks, architectures and delay regimes: per-cell
//! training and analysis, a checksummed manifest, and aggregate tables.

mod analysis;
mod config;
mod manifest;
mod run;
mod summary;

pub use analysis::{
    analysis_dataset, analysis_delay, analysis_time, analyze_network, delay_accuracy, window_start,
    write_delay_accuracy_csv, write_usage_csv, ConceptRemoval, NetworkAnalysis, EVAL_DELAYS,
};
pub use config::{cell_seed, derive_seed, regime_slug, AnalysisConfig, CellKey, ExperimentConfig};
pub use manifest::{
    sha256_hex, CellMetrics, CellOutcome, CellRecord, FileEntry, Manifest, MANIFEST_FILE, MANIFEST_FORMAT,
};
pub use run::{run_cell, run_experiment, SweepOutcome};
pub use summary::{mean_se, summarize, DelayRow, GroupKey, Summary, TemporalMean, TemporalRow, UsageMean};
