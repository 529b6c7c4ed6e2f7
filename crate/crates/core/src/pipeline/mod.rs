//! The experimental protocol around the model: PCA preprocessing of 3D
//! traces, train/test splits, the ridge baseline, synthetic traces, rolling
//! evaluation and grid search.

pub mod evaluate;
pub mod pca;
pub mod ridge;
pub mod split;
pub mod synth;
pub mod tune;

pub use evaluate::{
    rolling_evaluate, EvalSplit, Forecaster, LmarForecaster, Metrics, MetricsRow, MetricsTable,
    OnlineForecaster, RidgeForecaster,
};
pub use pca::{pca_fit, pca_project, pca_reconstruct, PcaBasis};
pub use ridge::{ridge_fit, ridge_fit_with, ridge_predict, RidgeModel, RidgeOptions};
pub use split::{split_train_test, DEFAULT_TEST_LEN, DEFAULT_TRAIN_LEN};
pub use synth::{synth_trace, RegimeChange, SynthConfig, SynthTrace};
pub use tune::{grid_search, grid_search_corpus, CandidateScore, Hyper, MethodGrid, TuneResult};
