use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw_sample, measurements_at_round, task, Problem, RoundPosterior, TestbedError};
use crate::conformal::CalibrationRecord;
use crate::seeds::{self, tag};

/// Records for every round; `rounds[k - 1][i]` is sample `i` seen at round `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rounds: Vec<Vec<CalibrationRecord>>,
}

impl Dataset {
    pub fn from_rounds(rounds: Vec<Vec<CalibrationRecord>>) -> Result<Self, TestbedError> {
        let n = rounds.first().map_or(0, Vec::len);
        if rounds.is_empty() || n == 0 {
            return Err(TestbedError::Malformed("dataset has no records".into()));
        }
        if let Some((k, r)) = rounds.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(TestbedError::Malformed(format!(
                "round {} has {} records, round 1 has {n}",
                k + 1,
                r.len()
            )));
        }
        for (k, round) in rounds.iter().enumerate() {
            for (i, rec) in round.iter().enumerate() {
                rec.validate().map_err(|e| {
                    TestbedError::Malformed(format!("round {} sample {i}: {e}", k + 1))
                })?;
            }
        }
        Ok(Self { rounds })
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn n_samples(&self) -> usize {
        self.rounds[0].len()
    }

    /// Records of round `k` (1-based).
    pub fn round(&self, k: usize) -> Result<&[CalibrationRecord], TestbedError> {
        if k == 0 || k > self.n_rounds() {
            return Err(TestbedError::RoundOutOfRange {
                round: k,
                rounds: self.n_rounds(),
            });
        }
        Ok(&self.rounds[k - 1])
    }

    pub fn rounds(&self) -> &[Vec<CalibrationRecord>] {
        &self.rounds
    }

    /// Keep only the first `p` task samples of every record. Because each
    /// (sample, round) pair draws from its own stream, this equals generating
    /// the dataset with `p` samples directly.
    pub fn truncate_samples(&self, p: usize) -> Result<Self, TestbedError> {
        if p == 0 {
            return Err(TestbedError::InvalidSpec(
                "posterior sample count must be positive".into(),
            ));
        }
        let rounds = self
            .rounds
            .iter()
            .map(|round| {
                round
                    .iter()
                    .map(|r| {
                        if r.task_samples.len() < p {
                            return Err(TestbedError::InvalidSpec(format!(
                                "record has {} task samples, cannot keep {p}",
                                r.task_samples.len()
                            )));
                        }
                        Ok(CalibrationRecord {
                            task_samples: r.task_samples[..p].to_vec(),
                            ..r.clone()
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rounds })
    }
}

/// Draw `n` i.i.d. samples and, for every round, `p` posterior task outputs.
///
/// Sample `i` uses the stream `(seed, SAMPLE, i)` and its round-`k`
/// posterior draws use `(seed, POSTERIOR, i, k)`, so the result is identical
/// for any thread count.
pub fn generate_dataset(
    problem: &Problem,
    n: usize,
    p: usize,
    seed: u64,
) -> Result<Dataset, TestbedError> {
    if n == 0 || p == 0 {
        return Err(TestbedError::InvalidSpec(format!(
            "need at least one sample and one posterior draw (n = {n}, p = {p})"
        )));
    }
    let rounds = problem.rounds();
    let posteriors = (1..=rounds)
        .map(|k| RoundPosterior::new(problem, k))
        .collect::<Result<Vec<_>, _>>()?;
    let per_sample = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream(seed, &[tag::SAMPLE, i as u64]);
            let sample = draw_sample(problem, &mut rng);
            (1..=rounds)
                .map(|k| {
                    let y = measurements_at_round(&sample, problem, k)?;
                    let mut post_rng = seeds::stream(seed, &[tag::POSTERIOR, i as u64, k as u64]);
                    let draws = posteriors[k - 1].draw(&y, p, &mut post_rng)?;
                    Ok(CalibrationRecord {
                        task_samples: draws.iter().map(|x| task(problem, x)).collect(),
                        true_output: sample.true_output,
                        class_label: sample.class_label,
                    })
                })
                .collect::<Result<Vec<_>, TestbedError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut by_round: Vec<Vec<CalibrationRecord>> = vec![Vec::with_capacity(n); rounds];
    for records in per_sample {
        for (k, rec) in records.into_iter().enumerate() {
            by_round[k].push(rec);
        }
    }
    Ok(Dataset { rounds: by_round })
}

/// One line of a round file (JSON Lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetLine {
    pub round: usize,
    pub sample: usize,
    pub true_output: f64,
    pub class_label: u8,
    pub task_samples: Vec<f64>,
}

pub fn write_round<W: Write>(
    mut out: W,
    round: usize,
    records: &[CalibrationRecord],
) -> std::io::Result<()> {
    for (sample, rec) in records.iter().enumerate() {
        let line = DatasetLine {
            round,
            sample,
            true_output: rec.true_output,
            class_label: rec.class_label,
            task_samples: rec.task_samples.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse a round file; lines must be in sample order for `round`. Blank
/// lines and lines starting with `#` are skipped.
pub fn read_round<R: BufRead>(
    input: R,
    round: usize,
) -> Result<Vec<CalibrationRecord>, TestbedError> {
    let mut records = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line =
            line.map_err(|e| TestbedError::Malformed(format!("line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(&line)
            .map_err(|e| TestbedError::Malformed(format!("line {}: {e}", lineno + 1)))?;
        if parsed.round != round || parsed.sample != records.len() {
            return Err(TestbedError::Malformed(format!(
                "line {}: expected round {round} sample {}, found round {} sample {}",
                lineno + 1,
                records.len(),
                parsed.round,
                parsed.sample
            )));
        }
        let rec =
            CalibrationRecord::new(parsed.task_samples, parsed.true_output, parsed.class_label)
                .map_err(|e| TestbedError::Malformed(format!("line {}: {e}", lineno + 1)))?;
        records.push(rec);
    }
    Ok(records)
}
