//! Confusion matrices, metrics, class balancing and cross validation.

pub mod cv;
pub mod metrics;

pub use cv::{
    class_balance, fold_assignment, kfold, losocv, select_training_subjects, subject_seed, train_hmm, CvConfig, CvReport, FoldResult, MeanSd, Night,
    NightResult, PerNightSummary, SubjectRecord, TrainConfig,
};
pub use metrics::{confusion, metrics, ClassMetrics, ConfusionMatrix, MetricsReport};
