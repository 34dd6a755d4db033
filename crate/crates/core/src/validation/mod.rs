//! Coverage validation: per-split metrics, repeated random splits, and the
//! Beta-Binomial law that the empirical coverage of a split follows.

mod beta_binomial;
mod coverage;
mod monte_carlo;

use thiserror::Error;

use crate::conformal::ConformalError;

pub use beta_binomial::{coverage_distribution, CoverageDistribution};
pub use coverage::{
    class_conditional_coverage, empirical_coverage, empty_strata, mean_interval_length,
    size_stratified_coverage, ClassCoverage, Stratum, Tally, DEFAULT_SIZE_EDGES,
};
pub use monte_carlo::{
    fold_sizes, monte_carlo, partition, MonteCarloConfig, MonteCarloResult, MonteCarloSummary,
    TrialMetrics,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot split {n} records into nonempty folds (calibration fold {n_cal})")]
    DegenerateFolds { n: usize, n_cal: usize },
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}
