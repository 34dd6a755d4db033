//! Exact posterior moments checked against brute-force quadrature of the
//! unnormalized joint density on a dense grid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use taskcp::oracles::grid_posterior_moments;
use taskcp::seeds;
use taskcp::testbed::{
    draw_sample, make_problem, measurements_at_round, posterior_moments, Problem, ProblemSpec,
};

fn random_instance(rng: &mut seeds::Rng, d: usize) -> Problem {
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let b = DMatrix::from_fn(d, d, |_, _| 0.6 * normal());
    let prior_cov = &b * b.transpose() + DMatrix::identity(d, d) * 0.4;
    let prior_mean = DVector::from_fn(d, |_, _| 0.5 * normal());
    let operator = DMatrix::from_fn(3, d, |_, _| normal());
    let weights = DVector::from_fn(d, |_, _| normal());
    let noise = 0.6 + 0.4 * rng.random::<f64>();
    Problem::new(
        prior_mean,
        prior_cov,
        noise,
        operator,
        &[1, 2, 3],
        weights,
        0.0,
    )
    .unwrap()
}

#[test]
fn posterior_matches_grid_quadrature() {
    let mut rng = seeds::stream(2024, &[77]);
    for case in 0..20 {
        let d = 1 + case % 3;
        let problem = random_instance(&mut rng, d);
        let sample = draw_sample(&problem, &mut rng);
        let k = 1 + (case / 3) % 3;
        let y = measurements_at_round(&sample, &problem, k).unwrap();
        let exact = posterior_moments(&problem, &y, k).unwrap();

        let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let rows = to_rows(&problem.operator_at_round(k).unwrap().into_owned());
        let points = match d {
            1 => 4001,
            2 => 601,
            _ => 161,
        };
        let grid = grid_posterior_moments(
            problem.prior_mean().as_slice(),
            &to_rows(problem.prior_cov()),
            &rows,
            y.as_slice(),
            problem.noise_std(),
            points,
        );
        for i in 0..d {
            assert!(
                (exact.mean[i] - grid.mean[i]).abs() < 1e-4,
                "case {case}: mean[{i}] {} vs grid {}",
                exact.mean[i],
                grid.mean[i]
            );
            for j in 0..d {
                assert!(
                    (exact.cov[(i, j)] - grid.cov[i][j]).abs() < 1e-3,
                    "case {case}: cov[{i},{j}] {} vs grid {}",
                    exact.cov[(i, j)],
                    grid.cov[i][j]
                );
            }
        }
    }
}

#[test]
fn covariance_shrinks_across_rounds() {
    for seed in 0..5 {
        let problem = make_problem(&ProblemSpec::default(), seed).unwrap();
        let sample = draw_sample(&problem, &mut seeds::stream(seed, &[1]));
        let covs: Vec<DMatrix<f64>> = (1..=problem.rounds())
            .map(|k| {
                let y = measurements_at_round(&sample, &problem, k).unwrap();
                let m = posterior_moments(&problem, &y, k).unwrap();
                assert!((&m.cov - m.cov.transpose()).amax() <= 1e-9);
                m.cov
            })
            .collect();
        for k in 0..covs.len() {
            for k2 in k + 1..covs.len() {
                let diff = &covs[k] - &covs[k2];
                let min_eig = SymmetricEigen::new(diff).eigenvalues.min();
                assert!(
                    min_eig >= -1e-8,
                    "seed {seed}: rounds {k} vs {k2}: {min_eig}"
                );
            }
        }
    }
}
