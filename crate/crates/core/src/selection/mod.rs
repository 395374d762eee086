//! Penalty selection, the synthetic generator and the end-to-end benchmark.

mod bench;
mod cv;
mod model;
mod synth;

pub use bench::{join_features, load_dataset, run_benchmark, BenchConfig, BenchOutcome, DataPaths, PenaltyGrid};
pub use cv::{default_gamma_grid, fold_assignment, kfold_cv, log_grid, CVResult, CvSettings, DEFAULT_ETA, DEFAULT_FOLDS};
pub use model::{fit_model, score_model, TrainedModel};
pub use synth::{duration_quantile, synth_generate, SynthConfig, SynthTruth};

pub(crate) fn design(records: &[crate::data::SurvivalRecord]) -> ndarray::Array2<f64> {
    crate::survival::design(records)
}
