//! Split-conformal calibration and the three interval constructors.
//!
//! Every method follows the same recipe: compute a nonconformity score per
//! calibration record, take the `ceil((1 - alpha)(n + 1))`-th smallest score
//! as `qhat`, and invert the score at test time into an interval.
//!
//! - **AR** (absolute residual): score `|z - z_hat|`, interval
//!   `[z_hat - qhat, z_hat + qhat]`. Width does not depend on the input.
//! - **LWR** (locally weighted residual): score `|z - mean| / std` over the
//!   posterior task samples, interval `mean ± std * qhat`.
//! - **CQR** (conformalized quantile regression): score
//!   `max{z(alpha/2) - z, z - z(1 - alpha/2)}` against sample quantiles of the
//!   task samples, interval `[z(alpha/2) - qhat, z(1 - alpha/2) + qhat]`.

mod interval;
mod quantile;
mod scores;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use interval::Interval;
pub use quantile::{conformal_quantile, conformal_rank, sample_quantile};
pub use scores::{
    ar_score, cqr_band, cqr_score, lwr_score, lwr_stats, CalibrationRecord, LwrStats,
};

pub(crate) use quantile::ceil_rank;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("error rate {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("task samples are all identical (zero spread)")]
    DegenerateSamples,
    #[error("predictor was calibrated for {found}, not {expected}")]
    MethodMismatch { expected: Method, found: Method },
    #[error("unknown method `{0}` (expected ar, lwr or cqr)")]
    UnknownMethod(String),
}

/// Miscoverage level `alpha` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ErrorRate(f64);

impl ErrorRate {
    pub fn new(alpha: f64) -> Result<Self, ConformalError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self(alpha))
        } else {
            Err(ConformalError::InvalidAlpha(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn target_coverage(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for ErrorRate {
    type Error = ConformalError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ErrorRate> for f64 {
    fn from(a: ErrorRate) -> f64 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ar,
    Lwr,
    Cqr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ar, Method::Lwr, Method::Cqr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ar => "ar",
            Method::Lwr => "lwr",
            Method::Cqr => "cqr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ConformalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ar" => Ok(Method::Ar),
            "lwr" => Ok(Method::Lwr),
            "cqr" => Ok(Method::Cqr),
            other => Err(ConformalError::UnknownMethod(other.to_string())),
        }
    }
}

/// How AR turns a list of task samples into the single point prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    First,
    Mean,
}

impl Reduction {
    pub fn apply(self, task_samples: &[f64]) -> Result<f64, ConformalError> {
        match (self, task_samples.first()) {
            (_, None) => Err(ConformalError::EmptyInput("task samples")),
            (Reduction::First, Some(&z)) => Ok(z),
            (Reduction::Mean, Some(_)) => {
                Ok(task_samples.iter().sum::<f64>() / task_samples.len() as f64)
            }
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduction::First => "first",
            Reduction::Mean => "mean",
        })
    }
}

impl FromStr for Reduction {
    type Err = ConformalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first" => Ok(Reduction::First),
            "mean" => Ok(Reduction::Mean),
            other => Err(ConformalError::InvalidInput(format!(
                "unknown reduction `{other}` (expected first or mean)"
            ))),
        }
    }
}

/// The per-record quantity an interval is built around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Summary {
    Point(f64),
    Spread(LwrStats),
    Band { lo: f64, hi: f64 },
}

/// A record reduced to its score and interval summary for one method.
///
/// Scores do not depend on the calibration split, so Monte-Carlo runs
/// prepare every record once and only redo the quantile per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prepared {
    pub score: f64,
    pub summary: Summary,
}

pub fn summarize(
    method: Method,
    task_samples: &[f64],
    alpha: ErrorRate,
    reduction: Reduction,
) -> Result<Summary, ConformalError> {
    match method {
        Method::Ar => reduction.apply(task_samples).map(Summary::Point),
        Method::Lwr => lwr_stats(task_samples).map(Summary::Spread),
        Method::Cqr => cqr_band(task_samples, alpha).map(|(lo, hi)| Summary::Band { lo, hi }),
    }
}

pub fn prepare(
    method: Method,
    record: &CalibrationRecord,
    alpha: ErrorRate,
    reduction: Reduction,
) -> Result<Prepared, ConformalError> {
    let summary = summarize(method, &record.task_samples, alpha, reduction)?;
    let z = record.true_output;
    let score = match summary {
        Summary::Point(z_hat) => ar_score(z_hat, z),
        Summary::Spread(s) if s.std > 0.0 => (z - s.mean).abs() / s.std,
        Summary::Spread(_) => return Err(ConformalError::DegenerateSamples),
        Summary::Band { lo, hi } => (lo - z).max(z - hi),
    };
    Ok(Prepared { score, summary })
}

/// A calibrated interval constructor. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub method: Method,
    pub alpha: ErrorRate,
    pub qhat: f64,
    pub calibration_size: usize,
    pub reduction: Reduction,
}

impl Predictor {
    pub fn from_scores(
        method: Method,
        alpha: ErrorRate,
        reduction: Reduction,
        scores: &[f64],
    ) -> Result<Self, ConformalError> {
        Ok(Self {
            method,
            alpha,
            qhat: conformal_quantile(scores, alpha)?,
            calibration_size: scores.len(),
            reduction,
        })
    }

    pub fn is_uncalibratable(&self) -> bool {
        self.qhat == f64::INFINITY
    }

    pub fn interval(&self, task_samples: &[f64]) -> Result<Interval, ConformalError> {
        let summary = summarize(self.method, task_samples, self.alpha, self.reduction)?;
        self.interval_from_summary(&summary)
    }

    pub fn interval_from_summary(&self, summary: &Summary) -> Result<Interval, ConformalError> {
        let q = self.qhat;
        match (self.method, summary) {
            (Method::Ar, Summary::Point(z_hat)) => Ok(Interval::symmetric(*z_hat, q)),
            (Method::Lwr, Summary::Spread(s)) => {
                if s.std <= 0.0 {
                    return Err(ConformalError::DegenerateSamples);
                }
                let radius = if q.is_infinite() { q } else { s.std * q };
                Ok(Interval::symmetric(s.mean, radius))
            }
            (Method::Cqr, Summary::Band { lo, hi }) => Ok(Interval::widened(*lo, *hi, q)),
            (expected, _) => Err(ConformalError::InvalidInput(format!(
                "summary does not match a {expected} predictor"
            ))),
        }
    }

    fn expect(&self, method: Method) -> Result<(), ConformalError> {
        if self.method == method {
            Ok(())
        } else {
            Err(ConformalError::MethodMismatch {
                expected: method,
                found: self.method,
            })
        }
    }
}

fn calibrate_with(
    method: Method,
    records: &[CalibrationRecord],
    alpha: ErrorRate,
    reduction: Reduction,
) -> Result<Predictor, ConformalError> {
    if records.is_empty() {
        return Err(ConformalError::EmptyInput("calibration records"));
    }
    let scores = records
        .iter()
        .map(|r| prepare(method, r, alpha, reduction).map(|p| p.score))
        .collect::<Result<Vec<_>, _>>()?;
    Predictor::from_scores(method, alpha, reduction, &scores)
}

pub fn ar_calibrate(
    records: &[CalibrationRecord],
    alpha: ErrorRate,
    reduction: Reduction,
) -> Result<Predictor, ConformalError> {
    calibrate_with(Method::Ar, records, alpha, reduction)
}

pub fn lwr_calibrate(
    records: &[CalibrationRecord],
    alpha: ErrorRate,
) -> Result<Predictor, ConformalError> {
    calibrate_with(Method::Lwr, records, alpha, Reduction::default())
}

pub fn cqr_calibrate(
    records: &[CalibrationRecord],
    alpha: ErrorRate,
) -> Result<Predictor, ConformalError> {
    calibrate_with(Method::Cqr, records, alpha, Reduction::default())
}

/// Calibrate any method; AR uses the default first-sample reduction.
pub fn calibrate(
    method: Method,
    records: &[CalibrationRecord],
    alpha: ErrorRate,
) -> Result<Predictor, ConformalError> {
    calibrate_with(method, records, alpha, Reduction::default())
}

pub fn calibrate_reduced(
    method: Method,
    records: &[CalibrationRecord],
    alpha: ErrorRate,
    reduction: Reduction,
) -> Result<Predictor, ConformalError> {
    calibrate_with(method, records, alpha, reduction)
}

pub fn interval(pred: &Predictor, task_samples: &[f64]) -> Result<Interval, ConformalError> {
    pred.interval(task_samples)
}

pub fn ar_interval(pred: &Predictor, z_hat: f64) -> Result<Interval, ConformalError> {
    pred.expect(Method::Ar)?;
    pred.interval_from_summary(&Summary::Point(z_hat))
}

pub fn lwr_interval(pred: &Predictor, task_samples: &[f64]) -> Result<Interval, ConformalError> {
    pred.expect(Method::Lwr)?;
    pred.interval(task_samples)
}

pub fn cqr_interval(pred: &Predictor, task_samples: &[f64]) -> Result<Interval, ConformalError> {
    pred.expect(Method::Cqr)?;
    pred.interval(task_samples)
}
