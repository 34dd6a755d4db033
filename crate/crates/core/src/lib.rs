//! Conformal prediction intervals for a scalar task computed on
//! reconstructions from incomplete, noisy measurements.
//!
//! - [`conformal`]: split-conformal calibration with the absolute-residual,
//!   locally-weighted-residual and conformalized-quantile-regression scores.
//! - [`testbed`]: a linear-Gaussian inverse problem with exact posterior
//!   sampling, nested measurement rounds and a sigmoid task.
//! - [`validation`]: Monte-Carlo coverage trials and the Beta-Binomial law of
//!   empirical coverage, plus class-conditional and size-stratified coverage.
//! - [`multiround`]: staged acquisition that stops once the interval is
//!   narrower than a threshold.

pub mod conformal;
pub mod multiround;
pub mod oracles;
pub mod seeds;
pub mod testbed;
pub mod validation;

pub use conformal::{
    calibrate, interval, CalibrationRecord, ConformalError, ErrorRate, Interval, Method, Predictor,
    Reduction,
};
