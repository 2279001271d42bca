//! The training procedure, the single-branch baseline, evaluation and
//! multi-seed comparison.

pub mod compare;
pub mod config;
pub mod report;
pub mod run;

pub use compare::{
    mean_std, run_comparison, summarize, CellOutcome, ComparisonReport, VariantSummary,
};
pub use config::{DaPairing, Optimizer, TrainConfig};
pub use report::{comparison_csv, loss_history_csv, write_comparison, write_run};
pub use run::{
    evaluate, fit, train, train_baseline_dcnn, train_with_precision, Evaluation, FitOutput,
    LossRecord, RunResult, TrainedModel,
};
