//! Training loop, validation-based model selection and ranking metrics.

mod dataset;
mod metrics;
mod report;
mod trainer;

pub use dataset::Dataset;
pub use metrics::{average_precision, roc_auc, EventMetrics, MetricsReport};
pub use report::{history_summary, metrics_summary, write_history_csv, write_metrics_csv};
pub use trainer::{
    evaluate, predict_dataset, train, EpochRecord, SelectionMetric, TrainConfig, TrainHistory, TrainOutcome,
};
