//! Order-statistic quantiles used for calibration and for summarizing
//! posterior task samples.

use super::{ConformalError, ErrorRate};

/// Ceiling that ignores round-off just above an integer, so that products
/// such as `0.9 * 10.0` land on the intended rank.
pub(crate) fn ceil_rank(x: f64) -> usize {
    let guarded = x - 1e-9 * x.abs().max(1.0);
    guarded.ceil().max(0.0) as usize
}

/// Rank `k = ceil((1 - alpha)(n + 1))` of the calibration order statistic.
pub fn conformal_rank(n: usize, alpha: ErrorRate) -> usize {
    ceil_rank((1.0 - alpha.value()) * (n as f64 + 1.0))
}

/// Split-conformal quantile: the `k`-th smallest score with
/// `k = ceil((1 - alpha)(n + 1))`, or `+inf` when `k > n`.
pub fn conformal_quantile(scores: &[f64], alpha: ErrorRate) -> Result<f64, ConformalError> {
    if scores.is_empty() {
        return Err(ConformalError::EmptyInput("calibration scores"));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(ConformalError::NonFinite(*bad));
    }
    let n = scores.len();
    let k = conformal_rank(n, alpha);
    if k > n {
        return Ok(f64::INFINITY);
    }
    Ok(kth_smallest(scores, k.max(1)))
}

/// Sample quantile of posterior task outputs: the `m`-th smallest value with
/// `m = clamp(ceil(omega * p), 1, p)`. Always an element of `values`.
pub fn sample_quantile(omega: f64, values: &[f64]) -> Result<f64, ConformalError> {
    if values.is_empty() {
        return Err(ConformalError::EmptyInput("task samples"));
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(ConformalError::InvalidInput(format!(
            "quantile level {omega} outside [0, 1]"
        )));
    }
    let p = values.len();
    let m = ceil_rank(omega * p as f64).clamp(1, p);
    Ok(kth_smallest(values, m))
}

/// Both tails at once; sorts a single copy.
pub(crate) fn sample_quantile_pair(lo: f64, hi: f64, values: &[f64]) -> (f64, f64) {
    let p = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let pick = |omega: f64| sorted[ceil_rank(omega * p as f64).clamp(1, p) - 1];
    (pick(lo), pick(hi))
}

fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(x: f64) -> ErrorRate {
        ErrorRate::new(x).unwrap()
    }

    #[test]
    fn fifth_of_five() {
        assert_eq!(
            conformal_quantile(&[3.0, 1.0, 5.0, 2.0, 4.0], a(0.2)).unwrap(),
            5.0
        );
    }

    #[test]
    fn single_score() {
        assert_eq!(conformal_quantile(&[7.0], a(0.5)).unwrap(), 7.0);
    }

    #[test]
    fn rank_beyond_sample_is_infinite() {
        assert_eq!(
            conformal_quantile(&[1.0, 2.0, 3.0], a(0.01)).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(matches!(
            conformal_quantile(&[], a(0.1)),
            Err(ConformalError::EmptyInput(_))
        ));
    }

    #[test]
    fn nonfinite_scores_rejected() {
        assert!(conformal_quantile(&[1.0, f64::NAN], a(0.1)).is_err());
    }

    #[test]
    fn exact_integer_rank_not_bumped_by_roundoff() {
        // (1 - 0.1) * 10 = 9 exactly in intent.
        assert_eq!(conformal_rank(9, a(0.1)), 9);
        assert_eq!(conformal_rank(19, a(0.05)), 19);
        assert_eq!(conformal_rank(420, a(0.1)), 379);
    }

    #[test]
    fn ties_share_a_value() {
        assert_eq!(
            conformal_quantile(&[2.0, 2.0, 2.0, 1.0], a(0.4)).unwrap(),
            2.0
        );
    }

    #[test]
    fn sample_quantile_conventions() {
        assert_eq!(sample_quantile(0.5, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.0);
        assert_eq!(sample_quantile(0.0, &[3.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(sample_quantile(1.0, &[3.0, 1.0, 2.0]).unwrap(), 3.0);
        assert!(sample_quantile(1.5, &[1.0]).is_err());
        assert!(sample_quantile(0.5, &[]).is_err());
    }

    #[test]
    fn pair_matches_single_quantiles() {
        let v = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2];
        let (lo, hi) = sample_quantile_pair(0.05, 0.95, &v);
        assert_eq!(lo, sample_quantile(0.05, &v).unwrap());
        assert_eq!(hi, sample_quantile(0.95, &v).unwrap());
    }
}
