//! Metrics, split generators and the cross-validation driver.

pub mod cv;
pub mod metrics;
pub mod splits;

pub use cv::{nested_cv, CvOptions, CvReport, FoldResult, Prediction, Summary};
pub use metrics::{accuracy, brier, ece, f1, roc_auc, Objective, ECE_BINS};
pub use splits::{Assignment, Partition, Scheme, SplitPlan};
