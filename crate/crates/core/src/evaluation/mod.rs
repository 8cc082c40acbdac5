//! Attack metrics over confidence scores and the statistical comparison
//! battery for run results.

pub mod batch;
pub mod mia;
pub mod stats;

pub use batch::{batch_report, parse_runs, read_runs, BatchReport, GroupKey, RunRecord};
pub use mia::{mia_evaluate, mia_threshold, roc_auc, MiaMetrics, ScoreSet};
pub use stats::{pairwise_compare, wilcoxon_signed_rank, PairwiseReport, WelchTest, Wilcoxon};
