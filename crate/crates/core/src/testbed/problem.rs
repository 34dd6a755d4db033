use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linalg::{factor_spd, spd_inverse};
use super::TestbedError;
use crate::seeds::{self, tag, Rng};

/// Weight norm for which `sigmoid(w . x)` with `x ~ N(0, I)` has standard
/// deviation 0.25.
pub const DEFAULT_TASK_WEIGHT_NORM: f64 = 1.312_677;

/// User-facing description of a synthetic problem; expanded by [`make_problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dim: usize,
    /// Cumulative number of measurement rows used at each round.
    pub rows_per_round: Vec<usize>,
    pub noise_std: f64,
    /// Isotropic prior standard deviation around zero.
    pub prior_std: f64,
    pub task_weight_norm: f64,
    pub task_bias: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            rows_per_round: vec![2, 4, 8, 16],
            noise_std: 0.3,
            prior_std: 1.0,
            task_weight_norm: DEFAULT_TASK_WEIGHT_NORM,
            task_bias: 0.0,
        }
    }
}

/// One measurement round: the first `row_count` rows of the full operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    pub row_count: usize,
    /// Total available rows divided by rows used.
    pub acceleration: f64,
}

#[derive(Debug, Clone)]
pub struct Problem {
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    prior_precision: DMatrix<f64>,
    prior_factor: DMatrix<f64>,
    noise_std: f64,
    operator: DMatrix<f64>,
    configs: Vec<MeasurementConfig>,
    task_weights: DVector<f64>,
    task_bias: f64,
}

impl Problem {
    /// Assemble a problem from explicit parts. `row_counts` must be strictly
    /// increasing prefixes of `operator`'s rows, with at least two rounds.
    pub fn new(
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
        noise_std: f64,
        operator: DMatrix<f64>,
        row_counts: &[usize],
        task_weights: DVector<f64>,
        task_bias: f64,
    ) -> Result<Self, TestbedError> {
        let d = prior_mean.len();
        if d == 0 {
            return Err(TestbedError::InvalidSpec(
                "dimension must be positive".into(),
            ));
        }
        if prior_cov.shape() != (d, d) || operator.ncols() != d || task_weights.len() != d {
            return Err(TestbedError::InvalidSpec(format!(
                "shape mismatch: dim {d}, prior cov {:?}, operator {:?}, weights {}",
                prior_cov.shape(),
                operator.shape(),
                task_weights.len()
            )));
        }
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(TestbedError::InvalidSpec(format!(
                "noise std must be positive, got {noise_std}"
            )));
        }
        validate_row_counts(row_counts)?;
        let total = *row_counts.last().expect("validated nonempty");
        if total > operator.nrows() {
            return Err(TestbedError::InvalidSpec(format!(
                "{total} rows requested but operator has {}",
                operator.nrows()
            )));
        }
        let prior_factor = factor_spd(&prior_cov, "prior covariance")?;
        let prior_precision = spd_inverse(&prior_cov, "prior covariance")?;
        let configs = row_counts
            .iter()
            .map(|&row_count| MeasurementConfig {
                row_count,
                acceleration: total as f64 / row_count as f64,
            })
            .collect();
        Ok(Self {
            prior_mean,
            prior_cov,
            prior_precision,
            prior_factor,
            noise_std,
            operator: operator.rows(0, total).into_owned(),
            configs,
            task_weights,
            task_bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn rounds(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[MeasurementConfig] {
        &self.configs
    }

    pub fn accelerations(&self) -> Vec<f64> {
        self.configs.iter().map(|c| c.acceleration).collect()
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub(crate) fn prior_precision(&self) -> &DMatrix<f64> {
        &self.prior_precision
    }

    pub(crate) fn prior_factor(&self) -> &DMatrix<f64> {
        &self.prior_factor
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn task_weights(&self) -> &DVector<f64> {
        &self.task_weights
    }

    pub fn task_bias(&self) -> f64 {
        self.task_bias
    }

    /// All measurement rows (those of the final round).
    pub fn full_operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn check_round(&self, k: usize) -> Result<(), TestbedError> {
        if k == 0 || k > self.rounds() {
            Err(TestbedError::RoundOutOfRange {
                round: k,
                rounds: self.rounds(),
            })
        } else {
            Ok(())
        }
    }

    /// Rows measured by round `k` (1-based).
    pub fn operator_at_round(&self, k: usize) -> Result<DMatrixView<'_, f64>, TestbedError> {
        self.check_round(k)?;
        Ok(self.operator.rows(0, self.configs[k - 1].row_count))
    }
}

fn validate_row_counts(row_counts: &[usize]) -> Result<(), TestbedError> {
    if row_counts.len() < 2 {
        return Err(TestbedError::InvalidSpec(format!(
            "at least two measurement rounds are required, got {}",
            row_counts.len()
        )));
    }
    if row_counts[0] == 0 {
        return Err(TestbedError::InvalidSpec(
            "first round must use at least one row".into(),
        ));
    }
    if let Some(w) = row_counts.windows(2).find(|w| w[1] <= w[0]) {
        return Err(TestbedError::InvalidSpec(format!(
            "row counts must strictly increase across rounds ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Build the problem described by `spec`. Operator rows and task weights are
/// i.i.d. standard normal draws from a stream derived from `seed`; the weights
/// are then rescaled to `task_weight_norm`.
pub fn make_problem(spec: &ProblemSpec, seed: u64) -> Result<Problem, TestbedError> {
    if spec.dim == 0 {
        return Err(TestbedError::InvalidSpec(
            "dimension must be positive".into(),
        ));
    }
    if !(spec.prior_std > 0.0 && spec.prior_std.is_finite()) {
        return Err(TestbedError::InvalidSpec(format!(
            "prior std must be positive, got {}",
            spec.prior_std
        )));
    }
    if !(spec.task_weight_norm >= 0.0 && spec.task_weight_norm.is_finite())
        || !spec.task_bias.is_finite()
    {
        return Err(TestbedError::InvalidSpec(
            "task weight norm and bias must be finite".into(),
        ));
    }
    validate_row_counts(&spec.rows_per_round)?;
    let d = spec.dim;
    let total = *spec.rows_per_round.last().expect("validated nonempty");
    let mut rng: Rng = seeds::stream(seed, &[tag::PROBLEM]);
    let operator = DMatrix::from_fn(total, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let raw = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = raw.norm();
    let weights = if norm > 0.0 {
        raw * (spec.task_weight_norm / norm)
    } else {
        raw
    };
    Problem::new(
        DVector::zeros(d),
        DMatrix::identity(d, d) * spec.prior_std.powi(2),
        spec.noise_std,
        operator,
        &spec.rows_per_round,
        weights,
        spec.task_bias,
    )
}
