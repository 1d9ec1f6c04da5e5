//! Automatic metrics, human-score aggregation, agreement and projection.

mod accuracy;
mod agreement;
mod ngram;
mod pca;
mod report;

pub use accuracy::{emotion_accuracy, is_correct, AccuracyMode};
pub use agreement::{fleiss_kappa, read_human_scores, response_quality, summarize_human_scores, HumanScore, HumanSummary};
pub use ngram::{bleu_n, distinct_n};
pub use pca::{matched_pca_distance, pca_project, Projection};
pub use report::{metric_report, ExampleRecord, MetricReport};
