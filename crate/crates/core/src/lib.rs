//! Pairwise total variation distances between clusters, estimated with one classifier.
//!
//! Given a dataset that has been over-partitioned into `k` clusters, a single
//! feed-forward network with `k` output logits is trained so that the score
//!
//! ```text
//! f(x)_ij = sigmoid(logit_j(x) - logit_i(x))
//! ```
//!
//! acts as a classifier between cluster `i` (class 0) and cluster `j` (class 1).
//! Holdout balanced accuracies of these `k²` classifiers form a distance matrix
//! whose entries relate to the total variation distance between the clusters'
//! distributions through `E[BA] = 1/2 + δ/4`. The matrix drives agglomerative
//! merging of the over-clustering.
//!
//! Modules:
//!
//! - [`numcore`]: matrices, the ReLU network with backpropagation, Adam.
//! - [`pairloss`]: pairwise scores, balanced weights and the row/column routed loss.
//! - [`estimator`]: holdout splits, balanced accuracy and the training loop.
//! - [`oracle`]: exact TVDs, the balanced Bayes rule and Monte Carlo checks.
//! - [`clusterops`]: over-clustering, noise injection and hierarchical merging.
//! - [`metrics`]: quality (AUROC), average accuracy, purity.
//! - [`commands`] and [`formats`]: the CLI pipeline and its on-disk formats.

pub mod clusterops;
pub mod commands;
pub mod dataset;
pub mod estimator;
pub mod formats;
pub mod metrics;
pub mod numcore;
pub mod oracle;
pub mod pairloss;
pub mod seeds;
pub mod synth;

pub use clusterops::{Clustering, MergeStep, MergeTrace};
pub use dataset::Dataset;
pub use estimator::{DistanceMatrix, TrainConfig};
pub use numcore::{AdamConfig, AdamState, Matrix, Network};
pub use pairloss::ClusterSizes;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for {len} entries")]
    Index { index: usize, len: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite value at {location}")]
    Numeric { location: String },
    #[error("invalid usage: {0}")]
    Usage(String),
    #[error("cluster {cluster} has {size} member(s) and cannot be split into train and validation")]
    UnsplittableCluster { cluster: usize, size: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Index { .. } => "index",
            Error::Degenerate(_) => "degenerate",
            Error::Numeric { .. } => "numeric",
            Error::Usage(_) => "usage",
            Error::UnsplittableCluster { .. } => "unsplittable-cluster",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Parse { .. } => "parse",
            Error::Consistency(_) => "consistency",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } => 3,
            Error::Parse { .. } => 4,
            Error::Consistency(_) => 5,
            Error::Numeric { .. } => 6,
            Error::UnsplittableCluster { .. } | Error::Degenerate(_) => 7,
            Error::UndefinedMetric(_) => 8,
            Error::Shape(_) | Error::Index { .. } => 9,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
