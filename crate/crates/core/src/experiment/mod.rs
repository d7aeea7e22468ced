//! Reproducible experiment commands behind the `wdgnn` binary. Every
//! command writes its outputs and an `experiment.json` manifest into a run
//! directory.

mod commands;
mod config;
mod manifest;
mod stats;

pub use commands::{
    checkpoint_file, cmd_eval, cmd_online, cmd_sweep, cmd_table, cmd_train, cmd_verify_theorem, evaluate, gen_data,
    load_model, loss_curve_csv, realization_seed, score_rollouts, sweep, theorem_holds, train_models, EvalReport,
    ModelSet, Policy, SweepAxis, SweepPoint, SweepReport, TableReport, TheoremConfig, ROW_CENTRALIZED,
    ROW_DECENTRALIZED, ROW_FILTER, ROW_FROZEN, ROW_GNN, ROW_OPTIMAL, STATIC_ERROR_TOLERANCE,
};
pub use config::{ExperimentConfig, ModelConfig, TrainingConfig};
pub use manifest::{
    metric_rows_csv, ExperimentManifest, MetricRow, RolloutScore, BUILD_ID, MANIFEST_FILE, METRIC_HEADER,
};
pub use stats::{mean_std, spearman};
