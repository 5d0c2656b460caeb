//! Interpretability metrics, variable overlap, rule-set comparison and
//! run-to-run consistency.

mod compare;
mod consistency;
pub mod hungarian;
mod metrics;
mod overlap;
mod rational;

use thiserror::Error;

pub use compare::{
    align_rules, align_rules_with, classify_pair, classify_pair_with, compare, compare_corpus, compare_with,
    pair_score_milli, similarity_score, AlignedPair, ClassificationKind, CompareOptions, ComparisonReport,
    ConditionClassification, CorpusComparison, CorpusEntry, Totals, Weights,
};
pub use consistency::{consistency, ConsistencyReport, MetricSummary};
pub use metrics::{compute_metrics, MetricsReport, RulesetMetrics};
pub use overlap::{variable_overlap, variable_overlap_in, OverlapReport};
pub use rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzerError {
    #[error("no rule sets to analyze")]
    EmptyInput,
    #[error("consistency needs at least two runs, got {0}")]
    InsufficientRuns(usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}
