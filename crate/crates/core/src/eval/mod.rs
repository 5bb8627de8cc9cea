//! Participant-fold cross-validation and evaluation metrics.

pub mod cv;
pub mod duration;
pub mod folds;
pub mod metrics;
pub mod report;

pub use cv::{run_cv, CvReport, FoldReport, MeanSd, SpecReport, VariantReport, WITHOUT_LOAD, WITH_LOAD};
pub use duration::{duration_errors, match_segments, DurationErrors, MatchTable, RegimeErrors, SegmentMatch};
pub use folds::{make_folds, FoldPlan};
pub use metrics::{classification_metrics, ClassificationMetrics, ConfusionCounts};
