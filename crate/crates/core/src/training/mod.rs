mod bench;
mod folds;
mod metrics;
mod trainer;

pub use bench::{run_benchmark, BenchConfig, BenchReport, BenchRow, BenchTimings, Method, BENCH_SCHEMA_VERSION};
pub use folds::{make_folds, stratified_split, FoldPlan};
pub use metrics::{argmax, f1_scores, mean_std, ClassScore, F1Scores};
pub use trainer::{
    derive_seed, fit, model_dims, predictions, train_fold, EpochLog, EpochView, Fitted, FoldResult, TrainConfig,
    DEFAULT_PATIENCE,
};
