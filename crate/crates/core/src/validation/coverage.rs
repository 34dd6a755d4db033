use serde::Serialize;

use super::ValidationError;
use crate::conformal::Interval;

/// Interval-length strata `[0,0.05], (0.05,0.1], (0.1,0.15], (0.15,0.2], (0.2,1]`.
pub const DEFAULT_SIZE_EDGES: [f64; 6] = [0.0, 0.05, 0.1, 0.15, 0.2, 1.0];

fn check_aligned(intervals: &[Interval], zs: &[f64]) -> Result<(), ValidationError> {
    if intervals.len() != zs.len() {
        return Err(ValidationError::LengthMismatch {
            left: intervals.len(),
            right: zs.len(),
        });
    }
    if intervals.is_empty() {
        return Err(ValidationError::Empty("intervals"));
    }
    Ok(())
}

/// Fraction of targets that fall inside their interval.
pub fn empirical_coverage(intervals: &[Interval], zs: &[f64]) -> Result<f64, ValidationError> {
    check_aligned(intervals, zs)?;
    let hits = intervals
        .iter()
        .zip(zs)
        .filter(|(iv, &z)| iv.contains(z))
        .count();
    Ok(hits as f64 / zs.len() as f64)
}

/// Average interval length; infinite as soon as one interval is.
pub fn mean_interval_length(intervals: &[Interval]) -> Result<f64, ValidationError> {
    if intervals.is_empty() {
        return Err(ValidationError::Empty("intervals"));
    }
    Ok(intervals.iter().map(Interval::length).sum::<f64>() / intervals.len() as f64)
}

/// Covered/total counts for one subgroup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub covered: usize,
    pub count: usize,
}

impl Tally {
    /// `None` when the group has no members.
    pub fn coverage(&self) -> Option<f64> {
        (self.count > 0).then(|| self.covered as f64 / self.count as f64)
    }

    pub fn add(&mut self, covered: bool) {
        self.count += 1;
        self.covered += usize::from(covered);
    }

    pub fn merge(&mut self, other: &Tally) {
        self.count += other.count;
        self.covered += other.covered;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCoverage {
    pub class0: Tally,
    pub class1: Tally,
}

impl ClassCoverage {
    pub fn as_pair(&self) -> (Option<f64>, Option<f64>) {
        (self.class0.coverage(), self.class1.coverage())
    }

    pub fn merge(&mut self, other: &ClassCoverage) {
        self.class0.merge(&other.class0);
        self.class1.merge(&other.class1);
    }
}

pub fn class_conditional_coverage(
    intervals: &[Interval],
    zs: &[f64],
    labels: &[u8],
) -> Result<ClassCoverage, ValidationError> {
    check_aligned(intervals, zs)?;
    if labels.len() != zs.len() {
        return Err(ValidationError::LengthMismatch {
            left: labels.len(),
            right: zs.len(),
        });
    }
    let mut out = ClassCoverage::default();
    for ((iv, &z), &label) in intervals.iter().zip(zs).zip(labels) {
        match label {
            0 => out.class0.add(iv.contains(z)),
            1 => out.class1.add(iv.contains(z)),
            other => {
                return Err(ValidationError::InvalidArgument(format!(
                    "class label {other}"
                )))
            }
        }
    }
    Ok(out)
}

/// Coverage among intervals whose length falls in `(lower, upper]`. The first
/// stratum is closed on the left; the overflow stratum has `upper = inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stratum {
    pub lower: f64,
    pub upper: f64,
    pub tally: Tally,
}

impl Stratum {
    pub fn is_overflow(&self) -> bool {
        self.upper == f64::INFINITY
    }
}

pub fn empty_strata(bin_edges: &[f64]) -> Result<Vec<Stratum>, ValidationError> {
    if bin_edges.len() < 2 {
        return Err(ValidationError::InvalidArgument(
            "need at least two bin edges".into(),
        ));
    }
    if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ValidationError::InvalidArgument(format!(
            "bin edges must be finite and strictly increasing: {bin_edges:?}"
        )));
    }
    let mut strata: Vec<Stratum> = bin_edges
        .windows(2)
        .map(|w| Stratum {
            lower: w[0],
            upper: w[1],
            tally: Tally::default(),
        })
        .collect();
    strata.push(Stratum {
        lower: bin_edges[bin_edges.len() - 1],
        upper: f64::INFINITY,
        tally: Tally::default(),
    });
    Ok(strata)
}

/// Index of the stratum holding `length`; lengths below the first edge are
/// counted in the first stratum.
pub(crate) fn stratum_index(bin_edges: &[f64], length: f64) -> usize {
    bin_edges[1..]
        .iter()
        .position(|&upper| length <= upper)
        .unwrap_or(bin_edges.len() - 1)
}

pub fn size_stratified_coverage(
    intervals: &[Interval],
    zs: &[f64],
    bin_edges: &[f64],
) -> Result<Vec<Stratum>, ValidationError> {
    check_aligned(intervals, zs)?;
    let mut strata = empty_strata(bin_edges)?;
    for (iv, &z) in intervals.iter().zip(zs) {
        strata[stratum_index(bin_edges, iv.length())]
            .tally
            .add(iv.contains(z));
    }
    Ok(strata)
}
