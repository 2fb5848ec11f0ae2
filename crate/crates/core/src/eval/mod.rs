//! Sample-quality measures: precision/recall curves over k-means cluster
//! histograms, signature uniqueness tables, and CSV/PNG reports.

mod kmeans;
mod prd;
mod report;
mod uniqueness;

use thiserror::Error;

use crate::gan::GanError;

pub use kmeans::kmeans_binary;
pub use prd::{
    angle_grid, cluster_histograms, prd_from_histograms, prd_from_samples, PrdCurve, PrdPoint, DEFAULT_ANGLES,
    DEFAULT_CLUSTERS,
};
pub use report::{
    emit_report, plot_prd, plot_uniqueness, write_prd_csv, write_uniqueness_csv, PRD_CSV, PRD_PLOT, UNIQUENESS_CSV,
    UNIQUENESS_PLOT,
};
pub use uniqueness::{
    default_sizes, generate_for_eval, signature, uniqueness_table, uniqueness_table_for_model, UniquenessRow,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("histogram not normalized: {0}")]
    NotNormalized(String),
    #[error("cannot form {clusters} clusters from {samples} samples")]
    DegenerateClustering { clusters: usize, samples: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("report i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("plot failure: {0}")]
    Plot(String),
    #[error(transparent)]
    Gan(#[from] GanError),
}
