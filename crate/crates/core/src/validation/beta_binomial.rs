//! Law of the empirical coverage of one calibration/test split.
//!
//! With `n_cal` exchangeable calibration scores and `n_test` exchangeable test
//! points, the number of covered test points is Beta-Binomial: the coverage
//! probability of a fixed calibration set is `Beta(a, b)` distributed and the
//! test points are conditionally i.i.d. Bernoulli draws from it.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use super::ValidationError;
use crate::conformal::{ceil_rank, conformal_rank, ErrorRate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageDistribution {
    pub n_test: usize,
    pub a: usize,
    pub b: usize,
    /// Number of calibration ranks above the selected quantile, `b`.
    pub l_cal: usize,
}

fn check_sizes(n_test: usize, n_cal: usize, alpha: ErrorRate) -> Result<(), ValidationError> {
    if n_test == 0 || n_cal == 0 {
        return Err(ValidationError::InvalidArgument(format!(
            "fold sizes must be positive (n_test = {n_test}, n_cal = {n_cal})"
        )));
    }
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return Err(ValidationError::InvalidArgument(format!(
            "alpha {a} must lie in (0, 1)"
        )));
    }
    Ok(())
}

impl CoverageDistribution {
    fn from_l(n_test: usize, n_cal: usize, l_cal: usize) -> Result<Self, ValidationError> {
        if l_cal == 0 || l_cal > n_cal {
            return Err(ValidationError::InvalidArgument(format!(
                "calibration set of {n_cal} too small for this alpha (l_cal = {l_cal}); \
                 the conformal quantile is infinite"
            )));
        }
        Ok(Self {
            n_test,
            a: n_cal + 1 - l_cal,
            b: l_cal,
            l_cal,
        })
    }

    /// Law implied by the conformal rank `k = ceil((1 - alpha)(n_cal + 1))`:
    /// `a = k`, `b = n_cal + 1 - k`. Agrees with [`coverage_distribution`]
    /// whenever `(n_cal + 1) * alpha` is an integer, and otherwise has `b`
    /// one smaller.
    pub fn for_conformal_rank(
        n_test: usize,
        n_cal: usize,
        alpha: ErrorRate,
    ) -> Result<Self, ValidationError> {
        check_sizes(n_test, n_cal, alpha)?;
        let k = conformal_rank(n_cal, alpha);
        Self::from_l(n_test, n_cal, (n_cal + 1).saturating_sub(k))
    }

    /// Expected empirical coverage `a / (a + b)`.
    pub fn mean(&self) -> f64 {
        self.a as f64 / (self.a + self.b) as f64
    }

    /// Variance of the empirical coverage (the count divided by `n_test`).
    pub fn variance(&self) -> f64 {
        let (a, b, n) = (self.a as f64, self.b as f64, self.n_test as f64);
        let s = a + b;
        a * b * (s + n) / (n * s * s * (s + 1.0))
    }

    fn ln_beta(x: f64, y: f64) -> f64 {
        ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)
    }

    /// Probability of exactly `k` covered test points.
    pub fn pmf(&self, k: usize) -> Result<f64, ValidationError> {
        if k > self.n_test {
            return Err(ValidationError::InvalidArgument(format!(
                "k = {k} exceeds n_test = {}",
                self.n_test
            )));
        }
        let (n, kf) = (self.n_test as f64, k as f64);
        let (a, b) = (self.a as f64, self.b as f64);
        let ln_choose = ln_gamma(n + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(n - kf + 1.0);
        Ok((ln_choose + Self::ln_beta(kf + a, n - kf + b) - Self::ln_beta(a, b)).exp())
    }

    /// The whole mass function, indexed by covered count.
    pub fn pmf_all(&self) -> Vec<f64> {
        (0..=self.n_test)
            .map(|k| self.pmf(k).expect("k within support"))
            .collect()
    }

    /// One draw of the empirical coverage: `q ~ Beta(a, b)`, then
    /// `Binomial(n_test, q) / n_test`.
    pub fn sample_coverage<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let beta = Beta::new(self.a as f64, self.b as f64).expect("a, b >= 1");
        let q: f64 = beta.sample(rng);
        let count = Binomial::new(self.n_test as u64, q.clamp(0.0, 1.0))
            .expect("probability in [0, 1]")
            .sample(rng);
        count as f64 / self.n_test as f64
    }
}

/// Parameters with `l_cal = ceil((n_cal + 1) * alpha)`, `a = n_cal + 1 - l_cal`,
/// `b = l_cal`.
pub fn coverage_distribution(
    n_test: usize,
    n_cal: usize,
    alpha: ErrorRate,
) -> Result<CoverageDistribution, ValidationError> {
    check_sizes(n_test, n_cal, alpha)?;
    let l_cal = ceil_rank((n_cal as f64 + 1.0) * alpha.value());
    CoverageDistribution::from_l(n_test, n_cal, l_cal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn a(x: f64) -> ErrorRate {
        ErrorRate::new(x).unwrap()
    }

    #[test]
    fn parameter_examples() {
        let d = coverage_distribution(10, 19, a(0.05)).unwrap();
        assert_eq!((d.l_cal, d.a, d.b), (1, 19, 1));
        let d = coverage_distribution(656, 1531, a(0.05)).unwrap();
        assert_eq!((d.l_cal, d.a, d.b), (77, 1455, 77));
        assert!((d.mean() - 1455.0 / 1532.0).abs() < 1e-15);
        assert!((d.mean() - 0.9497).abs() < 1e-4);
    }

    #[test]
    fn rank_law_differs_only_for_fractional_ranks() {
        let stated = coverage_distribution(180, 420, a(0.1)).unwrap();
        let exact = CoverageDistribution::for_conformal_rank(180, 420, a(0.1)).unwrap();
        assert_eq!((stated.a, stated.b), (378, 43));
        assert_eq!((exact.a, exact.b), (379, 42));
        let stated = coverage_distribution(10, 19, a(0.05)).unwrap();
        let exact = CoverageDistribution::for_conformal_rank(10, 19, a(0.05)).unwrap();
        assert_eq!(stated, exact);
    }

    #[test]
    fn invalid_sizes() {
        assert!(coverage_distribution(0, 10, a(0.1)).is_err());
        assert!(coverage_distribution(10, 0, a(0.1)).is_err());
        assert!(coverage_distribution(10, 10, a(0.0)).is_err());
        assert!(coverage_distribution(10, 10, a(1.0)).is_err());
        // (n + 1) alpha > n: the quantile would be infinite.
        assert!(coverage_distribution(10, 3, a(0.9)).is_err());
        assert!(CoverageDistribution::for_conformal_rank(10, 3, a(0.01)).is_err());
    }

    #[test]
    fn uniform_mixing_single_trial() {
        let d = CoverageDistribution {
            n_test: 1,
            a: 1,
            b: 1,
            l_cal: 1,
        };
        assert!((d.pmf(0).unwrap() - 0.5).abs() < 1e-14);
        assert!((d.pmf(1).unwrap() - 0.5).abs() < 1e-14);
        assert!(d.pmf(2).is_err());
    }

    #[test]
    fn uniform_mixing_is_discrete_uniform() {
        // Beta(1, 1) mixing gives 1 / (n + 1) on every count.
        let d = CoverageDistribution {
            n_test: 9,
            a: 1,
            b: 1,
            l_cal: 1,
        };
        for p in d.pmf_all() {
            assert!((p - 0.1).abs() < 1e-13);
        }
    }

    #[test]
    fn pmf_normalized_for_large_n() {
        for &(n_test, n_cal, alpha) in &[
            (10_000, 420, 0.1),
            (180, 420, 0.1),
            (656, 1531, 0.05),
            (1, 19, 0.05),
        ] {
            let d = coverage_distribution(n_test, n_cal, a(alpha)).unwrap();
            let total: f64 = d.pmf_all().iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "n_test {n_test}: {total}");
            let mean: f64 = d
                .pmf_all()
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * p)
                .sum();
            assert!((mean / n_test as f64 - d.mean()).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_matches_pmf() {
        let d = coverage_distribution(50, 99, a(0.1)).unwrap();
        let pmf = d.pmf_all();
        let m: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 / 50.0 * p)
            .sum();
        let v: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 / 50.0 - m).powi(2) * p)
            .sum();
        assert!((v - d.variance()).abs() < 1e-12);
    }

    #[test]
    fn sampler_first_moment() {
        let d = coverage_distribution(180, 420, a(0.1)).unwrap();
        let mut rng = seeds::stream(17, &[seeds::tag::THEORY]);
        let draws = 1_000_000;
        let sum: f64 = (0..draws).map(|_| d.sample_coverage(&mut rng)).sum();
        let se = (d.variance() / draws as f64).sqrt();
        assert!((sum / draws as f64 - d.mean()).abs() < 3.0 * se);
    }
}
