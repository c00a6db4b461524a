//! Detection metrics, decision-level fusion, benchmarking and visual dumps.

mod decision;
mod metrics;
mod report;
mod visual;

pub use decision::{decision_fuse, DecisionFusionConfig};
pub use metrics::{
    average_precision, average_precision_with, match_detections, pr_points, top1_precision, ApMethod, ApScalar,
    MatchResult, PrCurve, TP_IOU,
};
pub use report::{
    missing_weights, report_csv, report_table, required_networks, results_from_detections, run_benchmark, run_mode,
    summarize, write_reports, EvalReport, ImageResult, DECISION_INPUTS,
};
pub use visual::{dump_feature_map, feature_map_image, overlay, pr_plot_svg, save_overlay, save_pr_plot, Projection};
