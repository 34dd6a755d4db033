use serde::{Deserialize, Serialize};

use super::quantile::sample_quantile_pair;
use super::{ConformalError, ErrorRate};

/// One calibration or test example: task outputs of the reconstructions
/// (`p = 1` for a point estimator), the true task output and a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub task_samples: Vec<f64>,
    pub true_output: f64,
    pub class_label: u8,
}

impl CalibrationRecord {
    pub fn new(
        task_samples: Vec<f64>,
        true_output: f64,
        class_label: u8,
    ) -> Result<Self, ConformalError> {
        let rec = Self {
            task_samples,
            true_output,
            class_label,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), ConformalError> {
        if self.task_samples.is_empty() {
            return Err(ConformalError::EmptyInput("task samples"));
        }
        if let Some(bad) = self
            .task_samples
            .iter()
            .chain(std::iter::once(&self.true_output))
            .find(|v| !v.is_finite())
        {
            return Err(ConformalError::NonFinite(*bad));
        }
        if self.class_label > 1 {
            return Err(ConformalError::InvalidInput(format!(
                "class label {} is not 0 or 1",
                self.class_label
            )));
        }
        Ok(())
    }
}

/// Mean and population standard deviation of the task samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LwrStats {
    pub mean: f64,
    pub std: f64,
}

pub fn ar_score(z_hat: f64, z: f64) -> f64 {
    (z - z_hat).abs()
}

pub fn lwr_stats(task_samples: &[f64]) -> Result<LwrStats, ConformalError> {
    if task_samples.is_empty() {
        return Err(ConformalError::EmptyInput("task samples"));
    }
    let first = task_samples[0];
    if task_samples.iter().all(|&v| v == first) {
        return Ok(LwrStats {
            mean: first,
            std: 0.0,
        });
    }
    let p = task_samples.len() as f64;
    let mean = task_samples.iter().sum::<f64>() / p;
    let var = task_samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p;
    Ok(LwrStats {
        mean,
        std: var.sqrt(),
    })
}

pub fn lwr_score(task_samples: &[f64], z: f64) -> Result<f64, ConformalError> {
    let stats = lwr_stats(task_samples)?;
    if stats.std <= 0.0 {
        return Err(ConformalError::DegenerateSamples);
    }
    Ok((z - stats.mean).abs() / stats.std)
}

/// Lower and upper sample quantiles `z(alpha/2)`, `z(1 - alpha/2)`.
pub fn cqr_band(task_samples: &[f64], alpha: ErrorRate) -> Result<(f64, f64), ConformalError> {
    if task_samples.is_empty() {
        return Err(ConformalError::EmptyInput("task samples"));
    }
    let half = 0.5 * alpha.value();
    Ok(sample_quantile_pair(half, 1.0 - half, task_samples))
}

/// `max{z(alpha/2) - z, z - z(1 - alpha/2)}`; negative inside the band.
pub fn cqr_score(task_samples: &[f64], z: f64, alpha: ErrorRate) -> Result<f64, ConformalError> {
    let (lo, hi) = cqr_band(task_samples, alpha)?;
    Ok((lo - z).max(z - hi))
}
