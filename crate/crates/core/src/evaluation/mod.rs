//! Probes on frozen representations, long-tail group metrics and the
//! per-step metrics log.

mod groups;
mod knn;
mod linear;
mod metrics;

pub use groups::{
    group_partition, partition_by_counts, population_std, Aggregate, ClassTally, GroupPartition,
    GroupReport, ReportSummary,
};
pub use knn::{knn_evaluate, knn_predict, FeatureBank};
pub use linear::{
    linear_probe, linear_probe_features, train_linear_classifier, LinearClassifier,
    LinearProbeConfig,
};
pub use metrics::{read_metrics, track_run, MetricRecord, MetricsLog, ParsedMetrics};
