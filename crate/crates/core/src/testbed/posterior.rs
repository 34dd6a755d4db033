use nalgebra::{DMatrix, DMatrixView, DVector};
use rand_distr::StandardNormal;

use super::linalg::{cholesky_retry, factor_spd, symmetrize};
use super::{Problem, TestbedError};

/// Exact conditional moments of `x` given the measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Gaussian conjugate update for `y = A x + e`, `e ~ N(0, noise_std^2 I)`:
/// precision `P = S0^-1 + A^T A / s^2`, mean `P^-1 (S0^-1 m0 + A^T y / s^2)`.
pub fn posterior_moments_for(
    problem: &Problem,
    operator: DMatrixView<'_, f64>,
    y: &DVector<f64>,
) -> Result<PosteriorMoments, TestbedError> {
    if operator.nrows() != y.len() || operator.ncols() != problem.dim() {
        return Err(TestbedError::DimensionMismatch(format!(
            "operator {:?} against {} measurements in dimension {}",
            operator.shape(),
            y.len(),
            problem.dim()
        )));
    }
    if operator.nrows() == 0 {
        return Ok(PosteriorMoments {
            mean: problem.prior_mean().clone(),
            cov: problem.prior_cov().clone(),
        });
    }
    let inv_var = problem.noise_std().powi(-2);
    let precision = problem.prior_precision() + operator.transpose() * operator * inv_var;
    let info =
        problem.prior_precision() * problem.prior_mean() + operator.transpose() * y * inv_var;
    let chol = cholesky_retry(&precision, "posterior precision")?;
    Ok(PosteriorMoments {
        mean: chol.solve(&info),
        cov: symmetrize(&chol.inverse()),
    })
}

/// The parts of the round-`k` posterior that do not depend on the measured
/// values: covariance, its factor, and the affine map from `y` to the mean.
/// Built once per round and reused for every sample.
#[derive(Debug, Clone)]
pub struct RoundPosterior {
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    gain: DMatrix<f64>,
    offset: DVector<f64>,
}

impl RoundPosterior {
    pub fn new(problem: &Problem, k: usize) -> Result<Self, TestbedError> {
        let a = problem.operator_at_round(k)?;
        let inv_var = problem.noise_std().powi(-2);
        let precision = problem.prior_precision() + a.transpose() * a * inv_var;
        let chol = cholesky_retry(&precision, "posterior precision")?;
        let cov = symmetrize(&chol.inverse());
        let gain = &cov * a.transpose() * inv_var;
        let offset = chol.solve(&(problem.prior_precision() * problem.prior_mean()));
        let factor = factor_spd(&cov, "posterior covariance")?;
        Ok(Self {
            cov,
            factor,
            gain,
            offset,
        })
    }

    pub fn mean(&self, y: &DVector<f64>) -> Result<DVector<f64>, TestbedError> {
        if y.len() != self.gain.ncols() {
            return Err(TestbedError::DimensionMismatch(format!(
                "{} measurements for a round with {} rows",
                y.len(),
                self.gain.ncols()
            )));
        }
        Ok(&self.offset + &self.gain * y)
    }

    pub fn moments(&self, y: &DVector<f64>) -> Result<PosteriorMoments, TestbedError> {
        Ok(PosteriorMoments {
            mean: self.mean(y)?,
            cov: self.cov.clone(),
        })
    }

    /// Matches [`draw_from_moments`] on the same stream up to rounding.
    pub fn draw<R: rand::Rng>(
        &self,
        y: &DVector<f64>,
        p: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>, TestbedError> {
        if p == 0 {
            return Err(TestbedError::InvalidSpec(
                "posterior sample count must be positive".into(),
            ));
        }
        Ok(shifted_draws(&self.mean(y)?, &self.factor, p, rng))
    }
}

/// Posterior moments after round `k` (1-based) given that round's measurements.
pub fn posterior_moments(
    problem: &Problem,
    y: &DVector<f64>,
    k: usize,
) -> Result<PosteriorMoments, TestbedError> {
    posterior_moments_for(problem, problem.operator_at_round(k)?, y)
}

/// The posterior mean, which is also the MMSE reconstruction.
pub fn point_estimate(
    problem: &Problem,
    y: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>, TestbedError> {
    Ok(posterior_moments(problem, y, k)?.mean)
}

/// `p` i.i.d. posterior draws `mean + L v` with `L L^T = cov`, `v ~ N(0, I)`.
pub fn posterior_samples<R: rand::Rng>(
    problem: &Problem,
    y: &DVector<f64>,
    k: usize,
    p: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>, TestbedError> {
    let moments = posterior_moments(problem, y, k)?;
    draw_from_moments(&moments, p, rng)
}

pub fn draw_from_moments<R: rand::Rng>(
    moments: &PosteriorMoments,
    p: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>, TestbedError> {
    if p == 0 {
        return Err(TestbedError::InvalidSpec(
            "posterior sample count must be positive".into(),
        ));
    }
    let factor = factor_spd(&moments.cov, "posterior covariance")?;
    Ok(shifted_draws(&moments.mean, &factor, p, rng))
}

/// `p` draws `mean + factor * v`, each `v` taking the next `d` normals, so a
/// shorter run is an exact prefix of a longer one.
fn shifted_draws<R: rand::Rng>(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    p: usize,
    rng: &mut R,
) -> Vec<DVector<f64>> {
    let d = mean.len();
    (0..p)
        .map(|_| {
            let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            mean + factor * v
        })
        .collect()
}
