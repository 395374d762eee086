//! Metrics, statistical comparisons and the benchmark report.

mod hypothesis;
mod metrics;
mod report;

pub use hypothesis::{
    bonferroni, fisher_exact, fisher_exact_rational, group_test_battery, wilcoxon_rank_sum,
    BatteryResult, GroupSummary, Grouping, TestRow, TestTable, LOGRANK_SCHEME,
};
pub use metrics::{auc, bridge_scores, c_index, importance_similarity};
pub use report::{
    ChosenPenalty, ComparisonReport, ImportanceRow, MetricRow, NamedCurve, RunSummary,
    SimilarityMatrix,
};
