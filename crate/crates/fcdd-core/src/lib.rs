//! Fully convolutional data description: an explainable one-class anomaly
//! detector. A convolutional backbone maps each image to a low-resolution
//! latent grid; the pseudo-Huber norm of every grid vector is that
//! location's anomaly score. Averaging the grid scores an entire image,
//! while a fixed Gaussian kernel sized by the backbone's receptive field
//! upsamples the grid into a full-resolution anomaly heatmap, so the
//! explanation is built into the model rather than bolted on afterwards.
//!
//! The crate covers the full experiment loop around that model:
//!
//! - [`backbone`]: the convolutional architectures, plain-array training
//!   engine, receptive-field arithmetic, and weight archives,
//! - [`objective`]: score maps, the sample-level loss with outlier
//!   exposure, and the mask-supervised pixel loss,
//! - [`explain`]: Gaussian upsampling and heatmap rendering/export,
//! - [`data`]: one-vs-rest and defect-dataset splits, confetti noise, and
//!   synthetic corpora,
//! - [`train`]: the seeded optimization loop, snapshots, the repetition
//!   protocol, and 1 Hz resource monitoring,
//! - [`eval`]: ROC-AUC metrics, performance history over snapshots, and
//!   reproduction difference tables.
//!
//! Everything is f64 on the CPU and deterministic given a seed: two runs
//! from the same spec produce bit-identical weights.

pub mod backbone;
pub mod data;
pub mod eval;
pub mod explain;
pub mod objective;
pub mod train;

/// Errors produced by model construction, data handling, and training.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("weight archive error: {0}")]
    WeightArchive(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
