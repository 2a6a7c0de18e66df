//! Optimisation, cross-validation, metrics, ensembling and model bundles.

mod adamw;
mod bundle;
mod folds;
mod metrics;
mod report;
mod train;

pub use adamw::{adamw_step, AdamW, AdamWConfig, Moments};
pub use bundle::{BundleHeader, ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use folds::{stratified_kfold, FoldSplit};
pub use metrics::{compute_metrics, MetricSet};
pub use report::{format_mean_std, CvReport, FoldMetrics, Spread, SpreadSet};
pub use train::{
    cross_validate, evaluate, majority_vote, predict_ensemble, predict_profiles, train_fold, train_model,
    CvOutcome, FoldOutcome, Hyperparams, TrainingData, Vote,
};

#[cfg(test)]
mod tests;
