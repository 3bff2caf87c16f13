//! Confusion matrices, per-class rates, cell accuracy maps and score
//! distributions, plus their CSV/PGM renderings.

mod cells;
mod confusion;
mod distribution;
mod report;

pub use cells::{cell_accuracy_map, CellAccuracyMap};
pub use confusion::{accumulate, all_class_metrics, class_metrics, overall_accuracy, ClassMetrics, ConfusionMatrix};
pub use distribution::{score_distribution, ScoreDistribution, DEFAULT_BINS};
pub use report::{
    cell_accuracy_csv, cell_accuracy_pgm, confusion_csv, distribution_csv, metrics_csv, parse_confusion_csv,
    parse_metrics_csv, predictions_from_csv, predictions_to_csv, render_reports, summarize, EvalReport, MetricsRow,
    PredictionRecord, PREDICTIONS_HEADER,
};
