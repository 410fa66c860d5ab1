//! Evaluation protocol and analysis metrics for few-shot meta-learners:
//! task-averaged accuracy with confidence intervals, the cross-shot
//! accuracy matrix, a cross-entropy score of how much a learner
//! over-specializes to its training shot count, feature-space dispersion
//! statistics, and attention heat-map extraction.

mod cet;
mod error;
mod evaluate;
mod features;
mod heatmap;
mod matrix;
mod report;

pub use cet::{cet, cross_entropy, entropy, task_distribution, CetReport, TaskDistribution, Temperature};
pub use error::{EvalError, Result};
pub use evaluate::evaluate_tasks;
pub use features::{feature_distances, FeatureStats};
pub use heatmap::{heatmap, heatmap_filename, write_heatmap_png};
pub use matrix::{cross_test, shot_index, AccuracyMatrix, SHOT_LEVELS};
pub use report::EvalReport;
