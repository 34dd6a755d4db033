//! Multi-round acquisition: after each round, build that round's calibrated
//! interval and stop as soon as it is narrower than the threshold `tau`.

use serde::Serialize;
use thiserror::Error;

use crate::conformal::{
    summarize, CalibrationRecord, ConformalError, ErrorRate, Interval, Method, Predictor,
    Reduction, Summary,
};
use crate::validation::{fold_sizes, partition, ValidationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiRoundError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: ConformalError,
    },
    #[error("interval center undefined for an empty or unbounded interval")]
    UndefinedCenter,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Per-round predictors, the width threshold and per-round accelerations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiRoundPlan {
    predictors: Vec<Predictor>,
    tau: f64,
    accelerations: Vec<f64>,
}

impl MultiRoundPlan {
    pub fn new(
        predictors: Vec<Predictor>,
        tau: f64,
        accelerations: Vec<f64>,
    ) -> Result<Self, MultiRoundError> {
        if predictors.len() < 2 || predictors.len() != accelerations.len() {
            return Err(MultiRoundError::InvalidPlan(format!(
                "need at least two rounds with one acceleration each ({} predictors, {} accelerations)",
                predictors.len(),
                accelerations.len()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(MultiRoundError::InvalidPlan(format!(
                "tau must be positive, got {tau}"
            )));
        }
        if accelerations.iter().any(|r| !(*r > 0.0 && r.is_finite()))
            || accelerations.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(MultiRoundError::InvalidPlan(format!(
                "accelerations must be positive and strictly decreasing: {accelerations:?}"
            )));
        }
        Ok(Self {
            predictors,
            tau,
            accelerations,
        })
    }

    pub fn rounds(&self) -> usize {
        self.predictors.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn predictors(&self) -> &[Predictor] {
        &self.predictors
    }

    pub fn accelerations(&self) -> &[f64] {
        &self.accelerations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiRoundOutcome {
    /// 1-based round at which acquisition stopped.
    pub final_round: usize,
    /// No round met the threshold; the last round's interval is reported.
    pub exhausted: bool,
    /// Some evaluated round had identical LWR task samples and was treated
    /// as a zero-width interval at their mean.
    pub degenerate: bool,
    pub final_interval: Interval,
    pub true_output: f64,
    /// `None` when the final interval is empty or unbounded.
    pub center_error: Option<f64>,
    /// Lengths of every evaluated round, in order.
    pub round_lengths: Vec<f64>,
}

impl MultiRoundOutcome {
    pub fn covered(&self) -> bool {
        self.final_interval.contains(self.true_output)
    }
}

fn round_interval(
    pred: &Predictor,
    task_samples: &[f64],
) -> Result<(Interval, bool), ConformalError> {
    let summary = summarize(pred.method, task_samples, pred.alpha, pred.reduction)?;
    match summary {
        Summary::Spread(s) if s.std <= 0.0 => Ok((Interval::new(s.mean, s.mean), true)),
        _ => Ok((pred.interval_from_summary(&summary)?, false)),
    }
}

/// Walk the rounds in order and stop at the first interval shorter than `tau`.
pub fn run_sample<S: AsRef<[f64]>>(
    plan: &MultiRoundPlan,
    per_round_task_samples: &[S],
    true_output: f64,
) -> Result<MultiRoundOutcome, MultiRoundError> {
    if per_round_task_samples.len() != plan.rounds() {
        return Err(MultiRoundError::InvalidPlan(format!(
            "{} rounds of samples for a {}-round plan",
            per_round_task_samples.len(),
            plan.rounds()
        )));
    }
    let mut round_lengths = Vec::with_capacity(plan.rounds());
    let mut degenerate = false;
    for (k, (pred, samples)) in plan
        .predictors
        .iter()
        .zip(per_round_task_samples)
        .enumerate()
    {
        let (iv, flat) =
            round_interval(pred, samples.as_ref()).map_err(|source| MultiRoundError::Round {
                round: k + 1,
                source,
            })?;
        degenerate |= flat;
        round_lengths.push(iv.length());
        let last = k + 1 == plan.rounds();
        let accepted = iv.length() < plan.tau;
        if accepted || last {
            return Ok(MultiRoundOutcome {
                final_round: k + 1,
                exhausted: !accepted,
                degenerate,
                final_interval: iv,
                true_output,
                center_error: center_error(&iv, true_output).ok(),
                round_lengths,
            });
        }
    }
    unreachable!("plan has at least two rounds")
}

/// Harmonic mean of the accelerations at which each outcome stopped.
pub fn average_acceleration(
    outcomes: &[MultiRoundOutcome],
    accelerations: &[f64],
) -> Result<f64, MultiRoundError> {
    if outcomes.is_empty() {
        return Err(MultiRoundError::Empty("outcomes"));
    }
    let mut inv_sum = 0.0;
    for o in outcomes {
        let r = accelerations
            .get(o.final_round.wrapping_sub(1))
            .ok_or_else(|| {
                MultiRoundError::InvalidPlan(format!("no acceleration for round {}", o.final_round))
            })?;
        inv_sum += 1.0 / r;
    }
    Ok(outcomes.len() as f64 / inv_sum)
}

/// Distance from the true output to the interval midpoint.
pub fn center_error(interval: &Interval, z: f64) -> Result<f64, MultiRoundError> {
    interval
        .center()
        .map(|c| (z - c).abs())
        .ok_or(MultiRoundError::UndefinedCenter)
}

/// Largest center error within each group.
pub fn volume_max_center_error<G: AsRef<[MultiRoundOutcome]>>(
    groups: &[G],
) -> Result<Vec<f64>, MultiRoundError> {
    groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            if g.is_empty() {
                return Err(MultiRoundError::Empty("outcome group"));
            }
            g.iter().try_fold(0.0f64, |acc, o| {
                Ok(acc.max(center_error(&o.final_interval, o.true_output)?))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundHistogram {
    /// Accepted outcomes per round (index 0 is round 1).
    pub counts: Vec<usize>,
    pub exhausted: usize,
    pub total: usize,
}

impl RoundHistogram {
    pub fn fractions(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    pub fn exhausted_fraction(&self) -> f64 {
        self.exhausted as f64 / self.total as f64
    }

    /// True when every outcome landed in the same bin.
    pub fn is_single_atom(&self) -> bool {
        self.counts
            .iter()
            .chain(std::iter::once(&self.exhausted))
            .filter(|&&c| c > 0)
            .count()
            == 1
    }
}

pub fn round_distribution(
    outcomes: &[MultiRoundOutcome],
    rounds: usize,
) -> Result<RoundHistogram, MultiRoundError> {
    if outcomes.is_empty() {
        return Err(MultiRoundError::Empty("outcomes"));
    }
    let mut counts = vec![0; rounds];
    let mut exhausted = 0;
    for o in outcomes {
        if o.exhausted {
            exhausted += 1;
        } else {
            *counts
                .get_mut(o.final_round.wrapping_sub(1))
                .ok_or_else(|| {
                    MultiRoundError::InvalidPlan(format!("round {} beyond {rounds}", o.final_round))
                })? += 1;
        }
    }
    Ok(RoundHistogram {
        counts,
        exhausted,
        total: outcomes.len(),
    })
}

/// Settings for simulating the protocol on a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub method: Method,
    pub alpha: ErrorRate,
    pub tau: f64,
    pub cal_fraction: f64,
    pub seed: u64,
    pub group_size: usize,
    pub reduction: Reduction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub sample: usize,
    pub group: usize,
    pub outcome: MultiRoundOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub method: Method,
    pub trial: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub qhats: Vec<f64>,
    pub average_acceleration: f64,
    pub empirical_coverage: f64,
    pub coverage_se: f64,
    /// Mean over groups of the per-group maximum center error; `None` if
    /// any final interval has no center.
    pub average_max_center_error: Option<f64>,
    pub max_center_error_se: Option<f64>,
    pub histogram: RoundHistogram,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub outcomes: Vec<SampleOutcome>,
    pub summary: SimulationSummary,
}

/// Calibrate one predictor per round on a random calibration split and run
/// the protocol on every held-out sample. `trial` selects the split.
pub fn simulate(
    rounds: &[Vec<CalibrationRecord>],
    accelerations: &[f64],
    cfg: &SimulationConfig,
    trial: usize,
) -> Result<SimulationReport, MultiRoundError> {
    let n = rounds.first().map_or(0, Vec::len);
    if cfg.group_size == 0 {
        return Err(MultiRoundError::InvalidPlan(
            "group size must be positive".into(),
        ));
    }
    let (n_cal, _) = fold_sizes(n, cfg.cal_fraction)?;
    let (cal, mut test) = partition(n, n_cal, cfg.seed, trial);
    test.sort_unstable();
    let predictors = rounds
        .iter()
        .enumerate()
        .map(|(k, recs)| {
            let scores = cal
                .iter()
                .map(|&i| {
                    crate::conformal::prepare(cfg.method, &recs[i], cfg.alpha, cfg.reduction)
                        .map(|p| p.score)
                })
                .collect::<Result<Vec<_>, _>>()
                .and_then(|s| Predictor::from_scores(cfg.method, cfg.alpha, cfg.reduction, &s))
                .map_err(|source| MultiRoundError::Round {
                    round: k + 1,
                    source,
                })?;
            Ok(scores)
        })
        .collect::<Result<Vec<_>, MultiRoundError>>()?;
    let plan = MultiRoundPlan::new(predictors, cfg.tau, accelerations.to_vec())?;

    let outcomes = test
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let samples: Vec<&[f64]> = rounds
                .iter()
                .map(|r| r[i].task_samples.as_slice())
                .collect();
            Ok(SampleOutcome {
                sample: i,
                group: pos / cfg.group_size,
                outcome: run_sample(&plan, &samples, rounds[0][i].true_output)?,
            })
        })
        .collect::<Result<Vec<_>, MultiRoundError>>()?;

    let plain: Vec<MultiRoundOutcome> = outcomes.iter().map(|o| o.outcome.clone()).collect();
    let n_test = plain.len();
    let covered = plain.iter().filter(|o| o.covered()).count();
    let ec = covered as f64 / n_test as f64;
    let groups: Vec<&[MultiRoundOutcome]> = plain.chunks(cfg.group_size).collect();
    let (avg_ce, ce_se) = match volume_max_center_error(&groups) {
        Ok(maxes) => {
            let m = maxes.len() as f64;
            let mean = maxes.iter().sum::<f64>() / m;
            let se = if maxes.len() > 1 {
                (maxes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
                    / m.sqrt()
            } else {
                0.0
            };
            (Some(mean), Some(se))
        }
        Err(MultiRoundError::UndefinedCenter) => (None, None),
        Err(e) => return Err(e),
    };
    let summary = SimulationSummary {
        method: cfg.method,
        trial,
        n_cal,
        n_test,
        qhats: plan.predictors().iter().map(|p| p.qhat).collect(),
        average_acceleration: average_acceleration(&plain, accelerations)?,
        empirical_coverage: ec,
        coverage_se: (ec * (1.0 - ec) / n_test as f64).sqrt(),
        average_max_center_error: avg_ce,
        max_center_error_se: ce_se,
        histogram: round_distribution(&plain, plan.rounds())?,
        degenerate: plain.iter().filter(|o| o.degenerate).count(),
    };
    Ok(SimulationReport { outcomes, summary })
}
