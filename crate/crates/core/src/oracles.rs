//! Brute-force reference computations that share no code with the
//! implementations they check. Used by the test suites and by the
//! `validate` command.

/// Smallest score `q` with `#{s <= q} >= ceil((1 - alpha)(n + 1))`, found by
/// counting against every candidate; `+inf` when no score qualifies.
pub fn brute_force_conformal_quantile(scores: &[f64], alpha: f64) -> f64 {
    let n = scores.len();
    let needed = ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil() as usize;
    scores
        .iter()
        .copied()
        .filter(|&q| scores.iter().filter(|&&s| s <= q).count() >= needed)
        .fold(f64::INFINITY, f64::min)
}

/// Inverse of a symmetric matrix of size <= 3 by cofactors.
fn small_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match m.len() {
        1 => vec![vec![1.0 / m[0][0]]],
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            vec![
                vec![m[1][1] / det, -m[0][1] / det],
                vec![-m[1][0] / det, m[0][0] / det],
            ]
        }
        3 => {
            let c = |r0: usize, r1: usize, c0: usize, c1: usize| {
                m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
            };
            let cof = [
                [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
                [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
                [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
            ];
            let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
            (0..3)
                .map(|i| (0..3).map(|j| cof[j][i] / det).collect())
                .collect()
        }
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMoments {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Normalize `exp(log prior + log likelihood)` on a uniform grid covering
/// +-8 prior standard deviations per axis and take its first two moments.
pub fn grid_posterior_moments(
    prior_mean: &[f64],
    prior_cov: &[Vec<f64>],
    rows: &[Vec<f64>],
    y: &[f64],
    noise_std: f64,
    points_per_axis: usize,
) -> GridMoments {
    let d = prior_mean.len();
    let precision = small_inverse(prior_cov);
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let half = 8.0 * prior_cov[i][i].sqrt();
            let step = 2.0 * half / (points_per_axis - 1) as f64;
            (0..points_per_axis)
                .map(|j| prior_mean[i] - half + j as f64 * step)
                .collect()
        })
        .collect();
    let total = points_per_axis.pow(d as u32);
    let log_density = |flat: usize, x: &mut [f64]| {
        let mut rem = flat;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = axes[i][rem % points_per_axis];
            rem /= points_per_axis;
        }
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += (x[i] - prior_mean[i]) * precision[i][j] * (x[j] - prior_mean[j]);
            }
        }
        let misfit: f64 = rows
            .iter()
            .zip(y)
            .map(|(a, yi)| {
                let ax: f64 = a.iter().zip(x.iter()).map(|(u, v)| u * v).sum();
                (yi - ax).powi(2)
            })
            .sum();
        -0.5 * quad - 0.5 * misfit / (noise_std * noise_std)
    };
    let mut x = vec![0.0; d];
    let peak = (0..total)
        .map(|f| log_density(f, &mut x))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut mass = 0.0;
    let mut first = vec![0.0; d];
    let mut second = vec![vec![0.0; d]; d];
    for f in 0..total {
        let w = (log_density(f, &mut x) - peak).exp();
        mass += w;
        for i in 0..d {
            first[i] += w * x[i];
            for j in 0..d {
                second[i][j] += w * x[i] * x[j];
            }
        }
    }
    let mean: Vec<f64> = first.iter().map(|v| v / mass).collect();
    let cov = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| second[i][j] / mass - mean[i] * mean[j])
                .collect()
        })
        .collect();
    GridMoments { mean, cov }
}
