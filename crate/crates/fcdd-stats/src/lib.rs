//! Cross-method comparison statistics for anomaly-detection benchmarks.
//!
//! Takes a methods x datasets table of ROC-AUC scores and produces the
//! machinery needed to compare methods honestly across datasets:
//!
//! - per-dataset fractional rankings ([`rank_per_dataset`]),
//! - pairwise Wilcoxon signed-rank tests, exact by enumeration for small
//!   samples ([`wilcoxon_signed_rank`]),
//! - Holm step-down multiple-comparison correction ([`holm_adjust`]),
//! - critical-difference diagrams grouping methods that are not
//!   significantly different ([`cd_diagram`]),
//! - box-plot summaries with raw samples retained for scatter overlays
//!   ([`boxplot_stats`]).
//!
//! Score tables are read from CSV (first column `method`, remaining columns
//! one dataset each, values in percent). Diagram output is an SVG string
//! plus a machine-readable sidecar so every plot is reproducible from data
//! alone.

mod boxplot;
mod cdd;
mod holm;
pub mod plot;
mod ranks;
mod table;
mod wilcoxon;

pub use boxplot::{boxplot_stats, BoxplotStats};
pub use cdd::{cd_diagram, CdDiagram, PairwiseTest, SignificanceGraph};
pub use holm::{holm_adjust, HolmOutcome};
pub use ranks::{rank_per_dataset, RankTable};
pub use table::ScoreTable;
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonOptions, WilcoxonResult, ZeroPolicy,
};

/// Errors produced by the statistics pipeline.
#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error("table error: {0}")]
    Table(String),
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StatsError>;
