//! Synthetic measurement-and-reconstruction pipeline.
//!
//! The ground truth `x` is drawn from a Gaussian prior, measured through
//! nested sets of random linear rows with additive Gaussian noise, and
//! reconstructed by sampling the exact Gaussian posterior. The downstream
//! task is a soft linear classifier `sigmoid(w . x + b)`.

mod dataset;
mod linalg;
mod posterior;
mod problem;

use nalgebra::DVector;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use dataset::{generate_dataset, read_round, write_round, Dataset, DatasetLine};
pub use posterior::{
    draw_from_moments, point_estimate, posterior_moments, posterior_moments_for, posterior_samples,
    PosteriorMoments, RoundPosterior,
};
pub use problem::{
    make_problem, MeasurementConfig, Problem, ProblemSpec, DEFAULT_TASK_WEIGHT_NORM,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestbedError {
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
    #[error("round {round} out of range 1..={rounds}")]
    RoundOutOfRange { round: usize, rounds: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(
        "cannot factor {what} ({dim}x{dim}, diagonal in [{min_diagonal:e}, {max_diagonal:e}]) \
         even with jitter {max_jitter:e}"
    )]
    Factorization {
        what: &'static str,
        dim: usize,
        min_diagonal: f64,
        max_diagonal: f64,
        max_jitter: f64,
    },
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

/// One ground-truth draw with its full (all-rounds) noisy measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub truth: DVector<f64>,
    pub full_measurement: DVector<f64>,
    pub true_output: f64,
    pub class_label: u8,
}

/// Logistic function, evaluated without overflow on either side.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn task_logit(problem: &Problem, x: &DVector<f64>) -> f64 {
    problem.task_weights().dot(x) + problem.task_bias()
}

pub fn task(problem: &Problem, x: &DVector<f64>) -> f64 {
    sigmoid(task_logit(problem, x))
}

/// Draw `x ~ prior` and the noisy response of every measurement row. Noise is
/// drawn once, so all rounds see the same realization on shared rows.
pub fn draw_sample<R: rand::Rng>(problem: &Problem, rng: &mut R) -> Sample {
    let d = problem.dim();
    let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth = problem.prior_mean() + problem.prior_factor() * v;
    let a = problem.full_operator();
    let noise = DVector::from_fn(a.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let full_measurement = a * &truth + noise * problem.noise_std();
    let logit = task_logit(problem, &truth);
    Sample {
        true_output: sigmoid(logit),
        class_label: u8::from(logit >= 0.0),
        truth,
        full_measurement,
    }
}

/// Measurements available after round `k`: a prefix of the full vector.
pub fn measurements_at_round(
    sample: &Sample,
    problem: &Problem,
    k: usize,
) -> Result<DVector<f64>, TestbedError> {
    problem.check_round(k)?;
    let rows = problem.configs()[k - 1].row_count;
    Ok(sample.full_measurement.rows(0, rows).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use nalgebra::DMatrix;

    fn identity_problem(noise_std: f64) -> Problem {
        // Rounds of 1, 2, 3 identity rows in dimension 3.
        Problem::new(
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            noise_std,
            DMatrix::identity(3, 3),
            &[1, 2, 3],
            DVector::from_vec(vec![0.5, -1.0, 0.25]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(1.0 - sigmoid(40.0) <= 1e-17);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-1.0) < sigmoid(-0.999));
    }

    #[test]
    fn noiseless_identity_recovers_truth() {
        let problem = identity_problem(1e-6);
        let mut rng = seeds::stream(9, &[0]);
        let s = draw_sample(&problem, &mut rng);
        let y = measurements_at_round(&s, &problem, 3).unwrap();
        let m = posterior_moments(&problem, &y, 3).unwrap();
        assert!((&m.mean - &s.truth).amax() < 1e-4);
        assert!(m.cov.amax() < 1e-4);
        let x_hat = point_estimate(&problem, &y, 3).unwrap();
        assert_eq!(x_hat, m.mean);
        assert!((&x_hat - &s.truth).amax() < 1e-4);
    }

    #[test]
    fn zero_weights_give_half() {
        let spec = ProblemSpec {
            task_weight_norm: 0.0,
            ..ProblemSpec::default()
        };
        let problem = make_problem(&spec, 3).unwrap();
        let mut rng = seeds::stream(1, &[1]);
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let s = draw_sample(&problem, &mut rng);
            assert_eq!(s.true_output, 0.5);
            assert_eq!(s.class_label, 1);
            sum += s.true_output;
        }
        assert!((sum / draws as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn label_matches_logit_sign() {
        let problem = make_problem(&ProblemSpec::default(), 11).unwrap();
        let mut rng = seeds::stream(2, &[2]);
        for _ in 0..200 {
            let s = draw_sample(&problem, &mut rng);
            assert_eq!(s.class_label == 1, s.true_output >= 0.5);
            assert!(s.true_output > 0.0 && s.true_output < 1.0);
            assert!((task(&problem, &s.truth) - s.true_output).abs() == 0.0);
        }
    }

    #[test]
    fn measurements_are_nested_prefixes() {
        let problem = make_problem(&ProblemSpec::default(), 4).unwrap();
        let s = draw_sample(&problem, &mut seeds::stream(4, &[4]));
        let y1 = measurements_at_round(&s, &problem, 1).unwrap();
        let y2 = measurements_at_round(&s, &problem, 2).unwrap();
        let y4 = measurements_at_round(&s, &problem, 4).unwrap();
        assert_eq!(y1.as_slice(), &y2.as_slice()[..y1.len()]);
        assert_eq!(y4, s.full_measurement);
        assert!(measurements_at_round(&s, &problem, 0).is_err());
        assert!(measurements_at_round(&s, &problem, 5).is_err());
    }

    #[test]
    fn no_rows_returns_prior() {
        let problem = identity_problem(0.5);
        let empty = DMatrix::<f64>::zeros(0, 3);
        let m = posterior_moments_for(&problem, empty.rows(0, 0), &DVector::zeros(0)).unwrap();
        assert_eq!(&m.mean, problem.prior_mean());
        assert_eq!(&m.cov, problem.prior_cov());
    }

    #[test]
    fn posterior_sample_mean_within_standard_error() {
        let problem = make_problem(&ProblemSpec::default(), 8).unwrap();
        let s = draw_sample(&problem, &mut seeds::stream(8, &[8]));
        let y = measurements_at_round(&s, &problem, 2).unwrap();
        let m = posterior_moments(&problem, &y, 2).unwrap();
        let p = 100_000;
        let draws = posterior_samples(&problem, &y, 2, p, &mut seeds::stream(8, &[9])).unwrap();
        let mean = draws
            .iter()
            .fold(DVector::zeros(problem.dim()), |acc, x| acc + x)
            / p as f64;
        let bound = 4.0 * (m.cov.trace() / p as f64).sqrt();
        assert!(
            (&mean - &m.mean).norm() < bound,
            "{} >= {bound}",
            (&mean - &m.mean).norm()
        );
    }

    #[test]
    fn degenerate_posterior_samples_collapse() {
        let problem = identity_problem(1e-6);
        let y = DVector::from_vec(vec![0.3, -0.2, 1.1]);
        let m = posterior_moments(&problem, &y, 3).unwrap();
        let draws = posterior_samples(&problem, &y, 3, 50, &mut seeds::stream(1, &[3])).unwrap();
        for x in &draws {
            assert!((x - &m.mean).amax() < 1e-4);
        }
        let exact = PosteriorMoments {
            mean: m.mean.clone(),
            cov: DMatrix::zeros(3, 3),
        };
        for x in draw_from_moments(&exact, 10, &mut seeds::stream(1, &[4])).unwrap() {
            assert!((x - &m.mean).amax() < 1e-5);
        }
    }

    #[test]
    fn cached_round_posterior_agrees() {
        let problem = make_problem(&ProblemSpec::default(), 12).unwrap();
        let s = draw_sample(&problem, &mut seeds::stream(12, &[1]));
        for k in 1..=problem.rounds() {
            let y = measurements_at_round(&s, &problem, k).unwrap();
            let direct = posterior_moments(&problem, &y, k).unwrap();
            let cached = RoundPosterior::new(&problem, k).unwrap();
            let m = cached.moments(&y).unwrap();
            assert!((&m.mean - &direct.mean).amax() < 1e-10);
            assert_eq!(m.cov, direct.cov);
            let a = cached
                .draw(&y, 4, &mut seeds::stream(1, &[k as u64]))
                .unwrap();
            let b = draw_from_moments(&direct, 4, &mut seeds::stream(1, &[k as u64])).unwrap();
            for (x, z) in a.iter().zip(&b) {
                assert!((x - z).amax() < 1e-9);
            }
            assert!(cached.mean(&DVector::zeros(y.len() + 1)).is_err());
        }
    }

    #[test]
    fn posterior_samples_deterministic() {
        let problem = make_problem(&ProblemSpec::default(), 8).unwrap();
        let y = DVector::from_element(4, 0.1);
        let a = posterior_samples(&problem, &y, 2, 5, &mut seeds::stream(1, &[5])).unwrap();
        let b = posterior_samples(&problem, &y, 2, 5, &mut seeds::stream(1, &[5])).unwrap();
        assert_eq!(a, b);
        assert!(posterior_samples(&problem, &y, 2, 0, &mut seeds::stream(1, &[5])).is_err());
        assert!(posterior_moments(&problem, &y, 1).is_err());
    }
}
