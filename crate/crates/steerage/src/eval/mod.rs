//! Metrics and reports: multiple-choice truthfulness scores, intervention
//! intensity, per-category breakdowns, and 2-D cluster projections.

mod cluster_metrics;
mod intensity;
mod mc;
mod projection;
mod report;

pub use cluster_metrics::{adjusted_rand_index, rand_index};
pub use intensity::{intensity_metrics, IntensityMetrics};
pub use mc::{
    mc1, mc1_from_scores, mc2, mc2_from_scores, score_records, McOptions, QuestionScores,
};
pub use projection::{export_projection, projection_csv};
pub use report::{
    assemble_report, category_report, load_report, save_report, CategoryStats, EvalReport,
    ReportProvenance,
};
