//! Comparison of generated latents against the encoded reference set.

mod metrics;
mod pca;
mod report;
mod svg;
mod tsne;

pub use metrics::{
    avg_min_distance, correlation_matrix, min_distance_distribution, min_distances,
    nearest_neighbor_counts, DistanceHistogram, ModelTag, NnCounts, SampleSet, HISTOGRAM_BINS,
};
pub use pca::{pca_fit_project, Pca};
pub use report::{
    build_report, parse_metrics_csv, render_plots, write_metrics_csv, write_report,
    write_report_csvs, MetricsReport, MetricsRow, MetricsTable, ModelMetrics, ReportOptions,
    METRICS_HEADER,
};
pub use svg::{bar_chart, histogram_chart, scatter_chart, Series};
pub use tsne::{calibrate, tsne_embed, Calibration, TsneConfig, TsneResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("rows have inconsistent widths: expected {expected}, found {got}")]
    Ragged { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("t-SNE needs more than 3·perplexity = {limit} points, got {n}; use a perplexity below {suggest}")]
    TooFewPoints {
        n: usize,
        limit: usize,
        suggest: f64,
    },
    #[error("PCA needs at least k + 1 = {need} rows, got {got}")]
    PcaRows { need: usize, got: usize },
    #[error("malformed metrics CSV at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("cannot write report to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn check_rows(rows: &[Vec<f64>], what: &'static str) -> Result<usize, EvalError> {
    let width = rows.first().ok_or(EvalError::Empty(what))?.len();
    for r in rows {
        if r.len() != width {
            return Err(EvalError::Ragged {
                expected: width,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite(what));
        }
    }
    Ok(width)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
