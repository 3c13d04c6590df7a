//! Remaining-time prediction for video encoding corpora.
//!
//! A corpus is a set of clips crossed with encoder configurations. Once a
//! fraction of the encode tasks has run, the predictors in [`predictors`]
//! estimate the total wall-clock time still to go, and [`harness`] measures
//! how good those estimates are across random completion orders.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the CLI uses.

pub mod clustering;
pub mod complexity;
pub mod corpus;
pub mod gbrt;
pub mod harness;
mod matrix;
pub mod metrics;
pub mod predictors;
pub mod runner;
mod scalar;

pub use matrix::Matrix;
pub use scalar::{compensated_sum, Scalar};

use thiserror::Error;

pub type Model = gbrt::GbrtModel<f64>;
pub type Tree = gbrt::RegressionTree<f64>;
pub type KMeans = clustering::KMeansFit<f64>;
pub type Complexity = complexity::ClipComplexity<f64>;
pub type FeatureMatrix = Matrix<f64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Complexity(#[from] complexity::ComplexityError),
    #[error(transparent)]
    Cluster(#[from] clustering::ClusterError),
    #[error(transparent)]
    Model(#[from] gbrt::GbrtError),
    #[error(transparent)]
    Predict(#[from] predictors::PredictError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error(transparent)]
    Run(#[from] runner::RunError),
}

impl Error {
    /// True for errors caused by bad input data or arguments, as opposed to
    /// failures of the environment (I/O, child processes).
    pub fn is_validation(&self) -> bool {
        use corpus::CorpusError as C;
        match self {
            Error::Corpus(C::Io { .. }) => false,
            Error::Complexity(complexity::ComplexityError::Io { .. }) => false,
            Error::Run(e) => matches!(e, runner::RunError::Template(_) | runner::RunError::MissingInput(_)),
            Error::Harness(h) => harness_is_validation(h),
            _ => true,
        }
    }
}

fn harness_is_validation(e: &harness::HarnessError) -> bool {
    use harness::HarnessError as H;
    match e {
        H::Corpus(corpus::CorpusError::Io { .. }) => false,
        H::Realisation { source, .. } => harness_is_validation(source),
        _ => true,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
