//! End-to-end acceptance checks, run by `taskcp validate` and by the
//! `acceptance` test target.
//!
//! Every statistical tolerance is a multiple of a Monte-Carlo standard error
//! measured in the same run, so a smaller trial count automatically widens
//! the bands.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use taskcp::conformal::{conformal_quantile, prepare, ErrorRate, Method, Predictor, Reduction};
use taskcp::multiround::{simulate, SimulationConfig, SimulationReport};
use taskcp::oracles::{brute_force_conformal_quantile, grid_posterior_moments};
use taskcp::seeds;
use taskcp::testbed::{
    draw_sample, generate_dataset, make_problem, measurements_at_round, posterior_moments, Dataset,
    Problem, ProblemSpec,
};
use taskcp::validation::{
    coverage_distribution, monte_carlo, partition, CoverageDistribution, MonteCarloConfig,
    MonteCarloResult,
};

use crate::error::CliError;

/// Stop threshold used by the multi-round check and the CLI default.
pub const DEFAULT_TAU: f64 = 0.5;

/// Stream tags for data generated by the suite itself.
mod tag {
    pub const PROBLEM: u64 = 100;
    pub const QUANTILE_CASES: u64 = 101;
    pub const COVERAGE_DATA: u64 = 102;
    pub const MULTIROUND_DATA: u64 = 103;
    pub const POSTERIOR_CASES: u64 = 104;
    pub const FRESH_DATA: u64 = 105;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Monte-Carlo trials for the coverage studies.
    pub trials: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionReport {
    fn new(id: usize, name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            id,
            name,
            passed,
            detail,
        }
    }

    fn error(id: usize, name: &'static str, err: &dyn fmt::Display) -> Self {
        Self::new(id, name, false, format!("error: {err}"))
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

// ---------------------------------------------------------------------------
// 1. Quantile oracle

pub fn library_quantile(scores: &[f64], alpha: f64) -> f64 {
    let a = ErrorRate::new(alpha).expect("alpha drawn inside (0, 1)");
    conformal_quantile(scores, a).expect("finite nonempty scores")
}

/// Compare `quantile` against the brute-force order-statistic oracle on
/// `cases` random inputs, many of them with ties or with `alpha` placed
/// exactly on a rank boundary.
pub fn quantile_oracle<F>(quantile: F, seed: u64, cases: usize) -> CriterionReport
where
    F: Fn(&[f64], f64) -> f64,
{
    const NAME: &str = "quantile oracle equivalence";
    let mut rng = seeds::stream(seed, &[tag::QUANTILE_CASES]);
    let inputs: Vec<(Vec<f64>, f64)> = (0..cases)
        .map(|c| {
            let n = rng.random_range(1..=200usize);
            let scores: Vec<f64> = if c % 2 == 0 {
                (0..n)
                    .map(|_| rng.random_range(0..25) as f64 / 4.0)
                    .collect()
            } else {
                (0..n)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            let alpha = if c % 3 == 0 {
                rng.random_range(1..=n) as f64 / (n + 1) as f64
            } else {
                rng.random_range(0.001..0.999)
            };
            (scores, alpha)
        })
        .collect();
    let start = Instant::now();
    let mut mismatches = 0;
    let mut first = None;
    for (scores, alpha) in &inputs {
        let got = quantile(scores, *alpha);
        let want = brute_force_conformal_quantile(scores, *alpha);
        if got != want {
            mismatches += 1;
            first.get_or_insert((scores.len(), *alpha, got, want));
        }
    }
    let fast = start.elapsed().as_secs_f64() < 1.0;
    let mut detail = format!("{}/{cases} cases exact", cases - mismatches);
    if let Some((n, a, got, want)) = first {
        detail.push_str(&format!(
            "; first mismatch n={n} alpha={a}: got {got}, oracle {want}"
        ));
    }
    detail.push_str(if fast {
        "; runtime under 1 s"
    } else {
        "; runtime over 1 s"
    });
    CriterionReport::new(1, NAME, mismatches == 0 && fast, detail)
}

// ---------------------------------------------------------------------------
// Shared coverage study: default testbed, n = 600, p = 32, alpha = 0.1.

pub const STUDY_N: usize = 600;
pub const STUDY_P: usize = 32;
pub const STUDY_ALPHA: f64 = 0.1;
pub const STUDY_CAL_FRACTION: f64 = 0.7;
pub const SWEEP_PS: [usize; 5] = [2, 4, 8, 16, 32];

/// The default testbed instance shared by every data-driven criterion.
pub fn suite_problem(seed: u64) -> Result<Problem, CliError> {
    Ok(make_problem(
        &ProblemSpec::default(),
        seeds::derive(seed, &[tag::PROBLEM]),
    )?)
}

pub struct CoverageStudy {
    pub data: Dataset,
    /// Keyed by (method, round).
    pub results: BTreeMap<(Method, usize), MonteCarloResult>,
    /// Keyed by (method, p) at round 1.
    pub sweep: BTreeMap<(Method, usize), MonteCarloResult>,
}

impl CoverageStudy {
    pub fn run(cfg: &SuiteConfig) -> Result<Self, CliError> {
        let problem = suite_problem(cfg.seed)?;
        let data_seed = seeds::derive(cfg.seed, &[tag::COVERAGE_DATA]);
        let data = generate_dataset(&problem, STUDY_N, STUDY_P, data_seed)?;
        let alpha = ErrorRate::new(STUDY_ALPHA)?;
        let mc = |m| MonteCarloConfig::new(m, alpha, cfg.trials, STUDY_CAL_FRACTION, cfg.seed);
        let mut results = BTreeMap::new();
        for m in Method::ALL {
            for k in 1..=data.n_rounds() {
                results.insert((m, k), monte_carlo(data.round(k)?, &mc(m))?);
            }
        }
        let mut sweep = BTreeMap::new();
        for p in SWEEP_PS {
            let truncated = data.truncate_samples(p)?;
            for m in [Method::Lwr, Method::Cqr] {
                sweep.insert((m, p), monte_carlo(truncated.round(1)?, &mc(m))?);
            }
        }
        Ok(Self {
            data,
            results,
            sweep,
        })
    }
}

pub fn marginal_coverage(study: &CoverageStudy) -> CriterionReport {
    const NAME: &str = "marginal coverage";
    let mut failures = Vec::new();
    let (mut lo_seen, mut hi_seen) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((m, k), res) in &study.results {
        let s = &res.summary;
        let lo = s.target_coverage - 4.0 * s.se_coverage;
        let hi = s.target_coverage + 1.0 / (s.n_cal as f64 + 1.0) + 4.0 * s.se_coverage;
        lo_seen = lo_seen.min(s.mean_coverage);
        hi_seen = hi_seen.max(s.mean_coverage);
        if !(lo..=hi).contains(&s.mean_coverage) {
            failures.push(format!(
                "{m} round {k}: {:.5} outside [{lo:.5}, {hi:.5}]",
                s.mean_coverage
            ));
        }
    }
    let any = study.results.values().next().map(|r| &r.summary);
    let mut detail = format!(
        "{} method/round studies, mean EC in [{lo_seen:.5}, {hi_seen:.5}]",
        study.results.len()
    );
    if let Some(s) = any {
        detail.push_str(&format!(
            " (n_cal={}, n_test={}, T={}, target {})",
            s.n_cal, s.n_test, s.trials, s.target_coverage
        ));
    }
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    CriterionReport::new(2, NAME, failures.is_empty(), detail)
}

/// Largest deviation of |sum pmf - 1| over a range of test-fold sizes.
pub fn pmf_normalization_error() -> f64 {
    let mut worst: f64 = 0.0;
    for n_test in [1usize, 10, 100, 1000, 10_000] {
        for (n_cal, alpha) in [(420usize, 0.1), (19, 0.05), (1531, 0.05), (99, 0.3)] {
            let a = ErrorRate::new(alpha).expect("valid alpha");
            let laws = [
                coverage_distribution(n_test, n_cal, a),
                CoverageDistribution::for_conformal_rank(n_test, n_cal, a),
            ];
            for law in laws.into_iter().flatten() {
                let total: f64 = law.pmf_all().iter().sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    worst
}

pub fn beta_binomial_law(study: &CoverageStudy) -> CriterionReport {
    const NAME: &str = "Beta-Binomial law";
    let mut failures = Vec::new();
    let (mut z_mean, mut z_var) = (0.0f64, 0.0f64);
    let mut stated_note = String::new();
    for ((m, k), res) in &study.results {
        let s = &res.summary;
        let Some(law) = s.theory_rank else {
            failures.push(format!("{m} round {k}: no finite law"));
            continue;
        };
        let zm = (s.mean_coverage - law.mean()).abs() / s.se_coverage;
        let zv = (s.var_coverage - law.variance()).abs() / s.se_var_coverage;
        z_mean = z_mean.max(zm);
        z_var = z_var.max(zv);
        if !(zm <= 4.0 && zv <= 4.0) {
            failures.push(format!("{m} round {k}: mean z {zm:.2}, variance z {zv:.2}"));
        }
        if stated_note.is_empty() {
            if let Some(st) = s.theory_stated {
                stated_note = format!(
                    "; rank law Beta({}, {}) mean {:.5}, ceil-form law Beta({}, {}) mean {:.5}",
                    law.a,
                    law.b,
                    law.mean(),
                    st.a,
                    st.b,
                    st.mean()
                );
            }
        }
    }
    let pmf_err = pmf_normalization_error();
    if pmf_err > 1e-10 {
        failures.push(format!("pmf sums off by {pmf_err:e}"));
    }
    let mut detail = format!(
        "max |z| mean {z_mean:.2}, variance {z_var:.2} (limit 4); pmf sum error {pmf_err:.1e} up to n_test=10000{stated_note}"
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    CriterionReport::new(3, NAME, failures.is_empty(), detail)
}

/// Checks `later <= earlier + se` along a sequence of (mean, se) pairs, with
/// `se` the standard error of the difference treating the two as independent.
fn nonincreasing_within_se(points: &[(f64, f64)]) -> Result<(), (usize, f64)> {
    for (i, w) in points.windows(2).enumerate() {
        let se = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        let excess = w[1].0 - w[0].0;
        if excess > se {
            return Err((i, excess / se));
        }
    }
    Ok(())
}

/// Interval lengths on independently generated datasets, one random split
/// each, so that the spread across datasets is part of the standard error.
pub struct FreshStudy {
    pub datasets: usize,
    /// Per (method, round): MIL of each dataset.
    pub mil: BTreeMap<(Method, usize), Vec<f64>>,
}

impl FreshStudy {
    /// One fresh dataset per ten coverage trials, and at least twenty.
    pub fn dataset_count(trials: usize) -> usize {
        (trials / 10).max(20)
    }

    pub fn run(cfg: &SuiteConfig) -> Result<Self, CliError> {
        let problem = suite_problem(cfg.seed)?;
        let alpha = ErrorRate::new(STUDY_ALPHA)?;
        let datasets = Self::dataset_count(cfg.trials);
        let mut mil: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
        for t in 0..datasets {
            let data_seed = seeds::derive(cfg.seed, &[tag::FRESH_DATA, t as u64]);
            let data = generate_dataset(&problem, STUDY_N, STUDY_P, data_seed)?;
            for m in Method::ALL {
                let mc = MonteCarloConfig::new(m, alpha, 1, STUDY_CAL_FRACTION, data_seed);
                for k in 1..=data.n_rounds() {
                    let res = monte_carlo(data.round(k)?, &mc)?;
                    mil.entry((m, k))
                        .or_default()
                        .push(res.summary.mean_interval_length);
                }
            }
        }
        Ok(Self { datasets, mil })
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn mil_monotonicity(study: &CoverageStudy, fresh: &FreshStudy) -> CriterionReport {
    const NAME: &str = "MIL decreases across rounds";
    let rounds = study.data.n_rounds();
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for m in Method::ALL {
        let series: Vec<&Vec<f64>> = (1..=rounds).map(|k| &fresh.mil[&(m, k)]).collect();
        let means: Vec<f64> = series.iter().map(|v| mean_and_se(v).0).collect();
        for k in 1..rounds {
            // Paired across rounds: every dataset contributes to both.
            let diff: Vec<f64> = series[k]
                .iter()
                .zip(series[k - 1])
                .map(|(b, a)| b - a)
                .collect();
            let (rise, se) = mean_and_se(&diff);
            if rise > se {
                failures.push(format!(
                    "{m} rises from round {k} to {} by {:.2} SE",
                    k + 1,
                    rise / se
                ));
            }
        }
        let fixed: Vec<String> = (1..=rounds)
            .map(|k| format!("{:.4}", study.results[&(m, k)].summary.mean_interval_length))
            .collect();
        parts.push(format!(
            "{m} {} (single dataset: {})",
            means
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" "),
            fixed.join(" ")
        ));
    }
    let mut detail = format!(
        "mean over {} fresh datasets; {}",
        fresh.datasets,
        parts.join("; ")
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    CriterionReport::new(4, NAME, failures.is_empty(), detail)
}

pub fn p_sensitivity(study: &CoverageStudy) -> CriterionReport {
    const NAME: &str = "MIL decreases with posterior sample count";
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for m in [Method::Lwr, Method::Cqr] {
        let pts: Vec<(f64, f64)> = SWEEP_PS
            .iter()
            .map(|p| {
                let s = &study.sweep[&(m, *p)].summary;
                (s.mean_interval_length, s.se_interval_length)
            })
            .collect();
        parts.push(format!(
            "{m} p={:?}: {}",
            SWEEP_PS,
            pts.iter()
                .map(|p| format!("{:.4}", p.0))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        if let Err((i, z)) = nonincreasing_within_se(&pts) {
            failures.push(format!(
                "{m} rises from p={} to p={} by {z:.2} SE",
                SWEEP_PS[i],
                SWEEP_PS[i + 1]
            ));
        }
    }
    let mut detail = format!("round 1; {}", parts.join("; "));
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    CriterionReport::new(5, NAME, failures.is_empty(), detail)
}

pub fn ar_invariance(study: &CoverageStudy, multiround: &MultiRoundStudy) -> CriterionReport {
    const NAME: &str = "AR widths constant";
    let mut failures = Vec::new();
    let alpha = ErrorRate::new(STUDY_ALPHA).expect("valid alpha");
    let n = study.data.n_samples();
    let n_cal = (STUDY_CAL_FRACTION * n as f64 + 1e-9).floor() as usize;
    let (cal, _) = partition(n, n_cal, 0, 0);
    let mut checked = 0;
    for k in 1..=study.data.n_rounds() {
        let recs = study.data.round(k).expect("round exists");
        let outcome = (|| -> Result<bool, CliError> {
            let scores = cal
                .iter()
                .map(|&i| prepare(Method::Ar, &recs[i], alpha, Reduction::First).map(|p| p.score))
                .collect::<Result<Vec<_>, _>>()?;
            let pred = Predictor::from_scores(Method::Ar, alpha, Reduction::First, &scores)?;
            let width = (2.0 * pred.qhat).to_bits();
            let mut same = true;
            for r in recs {
                same &= pred.interval(&r.task_samples)?.length().to_bits() == width;
                checked += 1;
            }
            Ok(same)
        })();
        match outcome {
            Ok(true) => {}
            Ok(false) => failures.push(format!("round {k}: widths differ")),
            Err(e) => failures.push(format!("round {k}: {e}")),
        }
    }
    let hist = &multiround.reports[&Method::Ar].summary.histogram;
    if !hist.is_single_atom() {
        failures.push(format!(
            "multi-round histogram not a single atom: {:?} + {} exhausted",
            hist.counts, hist.exhausted
        ));
    }
    let mut detail = format!(
        "{checked} intervals over {} rounds share width 2*qhat bit for bit; multi-round stops {:?} (+{} exhausted)",
        study.data.n_rounds(),
        hist.counts,
        hist.exhausted
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    CriterionReport::new(6, NAME, failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 7. Multi-round protocol: alpha = 0.05 with a 500-point test fold.

pub const MR_ALPHA: f64 = 0.05;
pub const MR_N: usize = 2500;
pub const MR_CAL_FRACTION: f64 = 0.8;

pub struct MultiRoundStudy {
    pub reports: BTreeMap<Method, SimulationReport>,
    pub tau: f64,
}

impl MultiRoundStudy {
    pub fn run(cfg: &SuiteConfig) -> Result<Self, CliError> {
        let problem = suite_problem(cfg.seed)?;
        let data_seed = seeds::derive(cfg.seed, &[tag::MULTIROUND_DATA]);
        let data = generate_dataset(&problem, MR_N, STUDY_P, data_seed)?;
        let accel = problem.accelerations();
        let mut reports = BTreeMap::new();
        for method in Method::ALL {
            let sim = SimulationConfig {
                method,
                alpha: ErrorRate::new(MR_ALPHA)?,
                tau: DEFAULT_TAU,
                cal_fraction: MR_CAL_FRACTION,
                seed: cfg.seed,
                group_size: 8,
                reduction: Reduction::First,
            };
            reports.insert(method, simulate(data.rounds(), &accel, &sim, 0)?);
        }
        Ok(Self {
            reports,
            tau: DEFAULT_TAU,
        })
    }
}

pub fn multiround_soundness(study: &MultiRoundStudy) -> CriterionReport {
    const NAME: &str = "multi-round soundness";
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for (m, rep) in &study.reports {
        let s = &rep.summary;
        let too_long = rep
            .outcomes
            .iter()
            .filter(|o| {
                !o.outcome.exhausted
                    && o.outcome.final_interval.length().partial_cmp(&study.tau)
                        != Some(std::cmp::Ordering::Less)
            })
            .count();
        let bound = 1.0 - MR_ALPHA - 2.0 * (MR_ALPHA * (1.0 - MR_ALPHA) / s.n_test as f64).sqrt();
        if too_long > 0 {
            failures.push(format!(
                "{m}: {too_long} accepted intervals not shorter than tau"
            ));
        }
        if s.empirical_coverage < bound {
            failures.push(format!(
                "{m}: coverage {:.4} below {bound:.4}",
                s.empirical_coverage
            ));
        }
        parts.push(format!(
            "{m} EC {:.4} (bound {bound:.4}), mean accel {:.3}, stops {:?}+{} exhausted, max CE {}",
            s.empirical_coverage,
            s.average_acceleration,
            s.histogram.counts,
            s.histogram.exhausted,
            s.average_max_center_error
                .map_or("undefined".to_string(), |v| format!("{v:.4}"))
        ));
    }
    let n_test = study
        .reports
        .values()
        .next()
        .map_or(0, |r| r.summary.n_test);
    let mut detail = format!("tau {}, n_test {n_test}; {}", study.tau, parts.join("; "));
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    CriterionReport::new(7, NAME, failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 8. Posterior against grid quadrature.

fn random_small_problem(rng: &mut seeds::Rng, d: usize) -> Result<Problem, CliError> {
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let b = DMatrix::from_fn(d, d, |_, _| 0.6 * normal());
    let prior_cov = &b * b.transpose() + DMatrix::identity(d, d) * 0.4;
    let prior_mean = DVector::from_fn(d, |_, _| 0.5 * normal());
    let operator = DMatrix::from_fn(3, d, |_, _| normal());
    let weights = DVector::from_fn(d, |_, _| normal());
    let noise = 0.6 + 0.4 * rng.random::<f64>();
    Ok(Problem::new(
        prior_mean,
        prior_cov,
        noise,
        operator,
        &[1, 2, 3],
        weights,
        0.0,
    )?)
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn posterior_oracle(seed: u64) -> CriterionReport {
    const NAME: &str = "posterior oracle";
    let run = || -> Result<(f64, f64, f64), CliError> {
        let mut rng = seeds::stream(seed, &[tag::POSTERIOR_CASES]);
        let (mut mean_err, mut cov_err) = (0.0f64, 0.0f64);
        for case in 0..20 {
            let d = 1 + case % 3;
            let problem = random_small_problem(&mut rng, d)?;
            let sample = draw_sample(&problem, &mut rng);
            let k = 1 + (case / 3) % 3;
            let y = measurements_at_round(&sample, &problem, k)?;
            let exact = posterior_moments(&problem, &y, k)?;
            let points = [4001, 601, 161][d - 1];
            let grid = grid_posterior_moments(
                problem.prior_mean().as_slice(),
                &rows_of(problem.prior_cov()),
                &rows_of(&problem.operator_at_round(k)?.into_owned()),
                y.as_slice(),
                problem.noise_std(),
                points,
            );
            for i in 0..d {
                mean_err = mean_err.max((exact.mean[i] - grid.mean[i]).abs());
                for j in 0..d {
                    cov_err = cov_err.max((exact.cov[(i, j)] - grid.cov[i][j]).abs());
                }
            }
        }
        let mut min_eig = f64::INFINITY;
        for s in 0..5u64 {
            let problem = make_problem(
                &ProblemSpec::default(),
                seeds::derive(seed, &[tag::POSTERIOR_CASES, s]),
            )?;
            let sample = draw_sample(&problem, &mut rng);
            let covs = (1..=problem.rounds())
                .map(|k| {
                    let y = measurements_at_round(&sample, &problem, k)?;
                    Ok(posterior_moments(&problem, &y, k)?.cov)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            for a in 0..covs.len() {
                for b in a + 1..covs.len() {
                    let diff = &covs[a] - &covs[b];
                    min_eig = min_eig.min(SymmetricEigen::new(diff).eigenvalues.min());
                }
            }
        }
        Ok((mean_err, cov_err, min_eig))
    };
    match run() {
        Ok((mean_err, cov_err, min_eig)) => CriterionReport::new(
            8,
            NAME,
            mean_err <= 1e-4 && cov_err <= 1e-3 && min_eig >= -1e-8,
            format!(
                "20 instances, max mean error {mean_err:.2e} (limit 1e-4), max covariance error {cov_err:.2e} (limit 1e-3); \
                 min eigenvalue of covariance drops {min_eig:.2e} (limit -1e-8)"
            ),
        ),
        Err(e) => CriterionReport::error(8, NAME, &e),
    }
}

pub fn conditional_coverage(study: &CoverageStudy) -> CriterionReport {
    const NAME: &str = "conditional coverage diagnostics";
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for ((m, k), res) in &study.results {
        let s = &res.summary;
        for (label, tally) in [(0, &s.class_coverage.class0), (1, &s.class_coverage.class1)] {
            match tally.coverage() {
                Some(c) => {
                    let gap = (c - s.target_coverage).abs();
                    worst = worst.max(gap);
                    if gap > 0.05 {
                        failures.push(format!("{m} round {k} class {label}: {c:.4}"));
                    }
                }
                None => failures.push(format!("{m} round {k}: class {label} absent")),
            }
        }
        let stratified: usize = s.size_strata.iter().map(|st| st.tally.count).sum();
        if stratified != s.trials * s.n_test {
            failures.push(format!("{m} round {k}: strata hold {stratified} points"));
        }
    }
    let mut detail = format!(
        "largest per-class gap {:.2} percentage points (limit 5) over {} studies; size strata complete",
        100.0 * worst,
        study.results.len()
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    CriterionReport::new(9, NAME, failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 10. Byte-identical CLI outputs.

fn run_cli(args: &[String]) -> Result<(), CliError> {
    crate::run(args, &mut std::io::sink())
}

/// Run every subcommand into `dir` using `workers` threads.
fn cli_round_trip(dir: &Path, seed: u64, workers: usize) -> Result<(), CliError> {
    let s = |v: &str| v.to_string();
    let data = dir.join("data").display().to_string();
    let common = |cmd: &str| {
        vec![
            s("taskcp"),
            s(cmd),
            s("--workers"),
            workers.to_string(),
            s("--seed"),
            seed.to_string(),
        ]
    };
    let mut gen = common("generate");
    gen.extend([
        s("--n"),
        s("80"),
        s("--samples-p"),
        s("8"),
        s("--out"),
        data.clone(),
    ]);
    run_cli(&gen)?;
    for format in ["tsv", "json"] {
        let mut mc = common("montecarlo");
        mc.extend([
            s("--data"),
            data.clone(),
            s("--trials"),
            s("40"),
            s("--p-sweep"),
            s("2,4,8"),
            s("--format"),
            s(format),
            s("--out"),
            dir.join(format!("mc_{format}")).display().to_string(),
        ]);
        run_cli(&mc)?;
    }
    let mut mr = common("multiround");
    mr.extend([
        s("--data"),
        data.clone(),
        s("--trials"),
        s("3"),
        s("--tau"),
        s("0.6"),
        s("--out"),
        dir.join("mr").display().to_string(),
    ]);
    run_cli(&mr)
}

fn read_tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, CliError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries =
            std::fs::read_dir(&dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
        for entry in entries {
            let path = entry
                .map_err(|e| CliError::io(dir.display().to_string(), e))?
                .path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("under root")
                    .display()
                    .to_string();
                let bytes = std::fs::read(&path).map_err(|e| CliError::io(rel.clone(), e))?;
                out.insert(rel, bytes);
            }
        }
    }
    Ok(out)
}

pub fn determinism(seed: u64) -> CriterionReport {
    const NAME: &str = "determinism";
    let run = || -> Result<(usize, Vec<String>), CliError> {
        let tmp =
            tempfile::tempdir().map_err(|e| CliError::io("creating temporary directory", e))?;
        let mut trees = Vec::new();
        for (i, workers) in [1usize, 4, 4].into_iter().enumerate() {
            let dir = tmp.path().join(format!("run{i}"));
            cli_round_trip(&dir, seed, workers)?;
            trees.push(read_tree(&dir)?);
        }
        let mut diffs = Vec::new();
        for other in &trees[1..] {
            let keys: Vec<&String> = trees[0].keys().chain(other.keys()).collect();
            for key in keys {
                if trees[0].get(key) != other.get(key) && !diffs.contains(key) {
                    diffs.push(key.clone());
                }
            }
        }
        Ok((trees[0].len(), diffs))
    };
    match run() {
        Ok((files, diffs)) => {
            let passed = diffs.is_empty() && files > 0;
            let mut detail = format!(
                "{files} files from generate, montecarlo (tsv and json) and multiround identical across 1, 4 and 4 workers"
            );
            if !passed {
                detail = format!(
                    "{} of {files} files differ: {}",
                    diffs.len(),
                    diffs.join(", ")
                );
            }
            CriterionReport::new(10, NAME, passed, detail)
        }
        Err(e) => CriterionReport::error(10, NAME, &e),
    }
}

// ---------------------------------------------------------------------------

/// Run every criterion, in order.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<CriterionReport> {
    let mut reports = vec![quantile_oracle(library_quantile, cfg.seed, 1000)];
    let study = CoverageStudy::run(cfg);
    let multiround = MultiRoundStudy::run(cfg);
    match &study {
        Ok(s) => {
            reports.push(marginal_coverage(s));
            reports.push(beta_binomial_law(s));
        }
        Err(e) => {
            reports.push(CriterionReport::error(2, "marginal coverage", e));
            reports.push(CriterionReport::error(3, "Beta-Binomial law", e));
        }
    }
    match (&study, FreshStudy::run(cfg)) {
        (Ok(s), Ok(f)) => reports.push(mil_monotonicity(s, &f)),
        (Err(e), _) => reports.push(CriterionReport::error(4, "MIL decreases across rounds", e)),
        (_, Err(e)) => reports.push(CriterionReport::error(4, "MIL decreases across rounds", &e)),
    }
    match &study {
        Ok(s) => reports.push(p_sensitivity(s)),
        Err(e) => reports.push(CriterionReport::error(
            5,
            "MIL decreases with posterior sample count",
            e,
        )),
    }
    match (&study, &multiround) {
        (Ok(s), Ok(m)) => reports.push(ar_invariance(s, m)),
        (Err(e), _) | (_, Err(e)) => {
            reports.push(CriterionReport::error(6, "AR widths constant", e))
        }
    }
    match &multiround {
        Ok(m) => reports.push(multiround_soundness(m)),
        Err(e) => reports.push(CriterionReport::error(7, "multi-round soundness", e)),
    }
    reports.push(posterior_oracle(cfg.seed));
    match &study {
        Ok(s) => reports.push(conditional_coverage(s)),
        Err(e) => reports.push(CriterionReport::error(
            9,
            "conditional coverage diagnostics",
            e,
        )),
    }
    reports.push(determinism(cfg.seed));
    reports
}
