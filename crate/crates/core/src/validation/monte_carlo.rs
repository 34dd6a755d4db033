use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::beta_binomial::{coverage_distribution, CoverageDistribution};
use super::coverage::{empty_strata, stratum_index, ClassCoverage, Stratum, DEFAULT_SIZE_EDGES};
use super::ValidationError;
use crate::conformal::{
    prepare, CalibrationRecord, ErrorRate, Method, Predictor, Prepared, Reduction,
};
use crate::seeds::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub method: Method,
    pub alpha: ErrorRate,
    pub trials: usize,
    pub cal_fraction: f64,
    pub seed: u64,
    pub reduction: Reduction,
    pub size_edges: Vec<f64>,
}

impl MonteCarloConfig {
    pub fn new(
        method: Method,
        alpha: ErrorRate,
        trials: usize,
        cal_fraction: f64,
        seed: u64,
    ) -> Self {
        Self {
            method,
            alpha,
            trials,
            cal_fraction,
            seed,
            reduction: Reduction::default(),
            size_edges: DEFAULT_SIZE_EDGES.to_vec(),
        }
    }
}

/// Calibration fold size `floor(cal_fraction * n)`, with both folds nonempty.
pub fn fold_sizes(n: usize, cal_fraction: f64) -> Result<(usize, usize), ValidationError> {
    if !(cal_fraction > 0.0 && cal_fraction < 1.0) {
        return Err(ValidationError::InvalidArgument(format!(
            "calibration fraction {cal_fraction} must lie in (0, 1)"
        )));
    }
    let n_cal = (cal_fraction * n as f64 + 1e-9).floor() as usize;
    if n_cal == 0 || n_cal >= n {
        return Err(ValidationError::DegenerateFolds { n, n_cal });
    }
    Ok((n_cal, n - n_cal))
}

/// Random calibration/test split for trial `t`; the same for every method
/// and round that share a seed.
pub fn partition(n: usize, n_cal: usize, seed: u64, trial: usize) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeds::stream(seed, &[tag::PARTITION, trial as u64]));
    let test = idx.split_off(n_cal);
    (idx, test)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub qhat: f64,
    pub covered: usize,
    pub n_test: usize,
    pub empirical_coverage: f64,
    pub mean_interval_length: f64,
    pub class_coverage: ClassCoverage,
    pub size_strata: Vec<Stratum>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub method: Method,
    pub alpha: f64,
    pub target_coverage: f64,
    pub trials: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub mean_coverage: f64,
    pub std_coverage: f64,
    pub se_coverage: f64,
    pub var_coverage: f64,
    /// Standard error of `var_coverage` from the fourth central moment.
    pub se_var_coverage: f64,
    pub mean_interval_length: f64,
    pub std_interval_length: f64,
    pub se_interval_length: f64,
    /// Trials with exactly `k` covered test points, `k = 0..=n_test`.
    pub coverage_histogram: Vec<usize>,
    /// Pooled over all trials.
    pub class_coverage: ClassCoverage,
    pub size_strata: Vec<Stratum>,
    /// `None` when the calibration fold is too small for a finite quantile.
    pub theory_stated: Option<CoverageDistribution>,
    pub theory_rank: Option<CoverageDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub trials: Vec<TrialMetrics>,
    pub summary: MonteCarloSummary,
}

fn run_trial(
    prepared: &[Prepared],
    records: &[CalibrationRecord],
    cfg: &MonteCarloConfig,
    n_cal: usize,
    t: usize,
) -> Result<TrialMetrics, ValidationError> {
    let (cal, test) = partition(records.len(), n_cal, cfg.seed, t);
    let scores: Vec<f64> = cal.iter().map(|&i| prepared[i].score).collect();
    let pred = Predictor::from_scores(cfg.method, cfg.alpha, cfg.reduction, &scores)?;
    let mut covered = 0;
    let mut total_len = 0.0;
    let mut class_coverage = ClassCoverage::default();
    let mut size_strata = empty_strata(&cfg.size_edges)?;
    for &i in &test {
        let iv = pred.interval_from_summary(&prepared[i].summary)?;
        let hit = iv.contains(records[i].true_output);
        covered += usize::from(hit);
        total_len += iv.length();
        match records[i].class_label {
            0 => class_coverage.class0.add(hit),
            _ => class_coverage.class1.add(hit),
        }
        size_strata[stratum_index(&cfg.size_edges, iv.length())]
            .tally
            .add(hit);
    }
    let n_test = test.len();
    Ok(TrialMetrics {
        trial: t,
        qhat: pred.qhat,
        covered,
        n_test,
        empirical_coverage: covered as f64 / n_test as f64,
        mean_interval_length: total_len / n_test as f64,
        class_coverage,
        size_strata,
    })
}

/// Sample mean, sample standard deviation and fourth central moment.
fn moments(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (mean, var.sqrt(), m4)
}

/// Repeated random calibration/test splits of one round's records.
///
/// Every trial draws its split from its own stream, so results are the same
/// whether trials run in parallel or not.
pub fn monte_carlo(
    records: &[CalibrationRecord],
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloResult, ValidationError> {
    if cfg.trials == 0 {
        return Err(ValidationError::InvalidArgument(
            "need at least one trial".into(),
        ));
    }
    let (n_cal, n_test) = fold_sizes(records.len(), cfg.cal_fraction)?;
    empty_strata(&cfg.size_edges)?;
    let prepared = records
        .par_iter()
        .map(|r| prepare(cfg.method, r, cfg.alpha, cfg.reduction))
        .collect::<Result<Vec<_>, _>>()?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(&prepared, records, cfg, n_cal, t))
        .collect::<Result<Vec<_>, _>>()?;

    let ec: Vec<f64> = trials.iter().map(|t| t.empirical_coverage).collect();
    let mil: Vec<f64> = trials.iter().map(|t| t.mean_interval_length).collect();
    let (mean_coverage, std_coverage, m4) = moments(&ec);
    let (mean_mil, std_mil, _) = if mil.iter().all(|v| v.is_finite()) {
        moments(&mil)
    } else {
        (f64::INFINITY, f64::NAN, f64::NAN)
    };
    let tf = cfg.trials as f64;
    let var_coverage = std_coverage * std_coverage;
    let mut histogram = vec![0usize; n_test + 1];
    let mut class_coverage = ClassCoverage::default();
    let mut size_strata = empty_strata(&cfg.size_edges)?;
    for t in &trials {
        histogram[t.covered] += 1;
        class_coverage.merge(&t.class_coverage);
        for (acc, s) in size_strata.iter_mut().zip(&t.size_strata) {
            acc.tally.merge(&s.tally);
        }
    }
    let summary = MonteCarloSummary {
        method: cfg.method,
        alpha: cfg.alpha.value(),
        target_coverage: cfg.alpha.target_coverage(),
        trials: cfg.trials,
        n_cal,
        n_test,
        mean_coverage,
        std_coverage,
        se_coverage: std_coverage / tf.sqrt(),
        var_coverage,
        se_var_coverage: ((m4 - var_coverage * var_coverage).max(0.0) / tf).sqrt(),
        mean_interval_length: mean_mil,
        std_interval_length: std_mil,
        se_interval_length: std_mil / tf.sqrt(),
        coverage_histogram: histogram,
        class_coverage,
        size_strata,
        theory_stated: coverage_distribution(n_test, n_cal, cfg.alpha).ok(),
        theory_rank: CoverageDistribution::for_conformal_rank(n_test, n_cal, cfg.alpha).ok(),
    };
    Ok(MonteCarloResult { trials, summary })
}
