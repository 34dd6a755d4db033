use serde::{Deserialize, Serialize};

/// A closed interval on the extended real line.
///
/// Bounds may be infinite (an uncalibratable predictor yields `(-inf, inf)`),
/// and `lower > upper` encodes the empty set. The width is stored alongside
/// the bounds so that constructors that know the width analytically (for
/// example `2 * radius` for a symmetric interval) report it exactly rather
/// than through a rounded subtraction of the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
    width: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        let width = if lower > upper { 0.0 } else { upper - lower };
        Self {
            lower,
            upper,
            width,
        }
    }

    /// `[center - radius, center + radius]` with width exactly `2 * radius`.
    pub fn symmetric(center: f64, radius: f64) -> Self {
        if radius == f64::INFINITY {
            return Self::unbounded();
        }
        if radius < 0.0 {
            return Self::new(center - radius, center + radius);
        }
        Self {
            lower: center - radius,
            upper: center + radius,
            width: 2.0 * radius,
        }
    }

    /// `[lo - margin, hi + margin]`; empty when the margin is negative enough
    /// to cross the bounds over.
    pub fn widened(lo: f64, hi: f64, margin: f64) -> Self {
        if margin == f64::INFINITY {
            return Self::unbounded();
        }
        let lower = lo - margin;
        let upper = hi + margin;
        if lower > upper {
            return Self {
                lower,
                upper,
                width: 0.0,
            };
        }
        Self {
            lower,
            upper,
            width: ((hi - lo) + 2.0 * margin).max(0.0),
        }
    }

    pub fn unbounded() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            width: f64::INFINITY,
        }
    }

    pub fn empty() -> Self {
        Self {
            lower: f64::INFINITY,
            upper: f64::NEG_INFINITY,
            width: 0.0,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn length(&self) -> f64 {
        self.width
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains(&self, z: f64) -> bool {
        !self.is_empty() && self.lower <= z && z <= self.upper
    }

    /// Midpoint, defined only for nonempty bounded intervals.
    pub fn center(&self) -> Option<f64> {
        if self.is_empty() || !self.is_bounded() {
            None
        } else {
            Some(0.5 * (self.lower + self.upper))
        }
    }

    /// Intersect with a known output range `[lo, hi]`.
    ///
    /// Never removes a point of the range that the interval contained, so
    /// coverage is unchanged whenever the true output lies in the range.
    pub fn clamp_to(&self, lo: f64, hi: f64) -> Self {
        if self.is_empty() {
            return *self;
        }
        let lower = self.lower.max(lo);
        let upper = self.upper.min(hi);
        if lower > upper {
            Self::empty()
        } else {
            Self::new(lower, upper)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_of_plain_interval() {
        let iv = Interval::new(0.2, 0.8);
        assert!((iv.length() - 0.6).abs() < 1e-15);
        assert!(iv.contains(0.2) && iv.contains(0.8) && iv.contains(0.5));
        assert!(!iv.contains(0.81));
    }

    #[test]
    fn reversed_bounds_are_empty() {
        let iv = Interval::new(0.5, 0.4);
        assert!(iv.is_empty());
        assert_eq!(iv.length(), 0.0);
        assert!(!iv.contains(0.45));
        assert!(!iv.contains(0.5));
        assert_eq!(iv.center(), None);
    }

    #[test]
    fn unbounded_contains_everything() {
        let iv = Interval::unbounded();
        assert_eq!(iv.length(), f64::INFINITY);
        assert!(iv.contains(-1e300) && iv.contains(1e300));
        assert_eq!(iv.center(), None);
    }

    #[test]
    fn symmetric_width_is_exactly_twice_radius() {
        for &(c, r) in &[(0.3, 0.1), (0.7123, 0.0417), (1e-3, 0.333)] {
            assert_eq!(Interval::symmetric(c, r).length(), 2.0 * r);
        }
        let point = Interval::symmetric(0.5, 0.0);
        assert_eq!(
            (point.lower(), point.upper(), point.length()),
            (0.5, 0.5, 0.0)
        );
        assert!(point.contains(0.5));
    }

    #[test]
    fn widened_with_negative_margin_can_be_empty() {
        let iv = Interval::widened(0.4, 0.5, -0.1);
        assert!(iv.is_empty());
        assert_eq!(iv.length(), 0.0);
        let ok = Interval::widened(0.2, 0.8, 0.05);
        assert!((ok.lower() - 0.15).abs() < 1e-15 && (ok.upper() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn clamp_keeps_range_points() {
        let iv = Interval::new(-0.3, 0.4).clamp_to(0.0, 1.0);
        assert_eq!((iv.lower(), iv.upper()), (0.0, 0.4));
        let all = Interval::unbounded().clamp_to(0.0, 1.0);
        assert_eq!(all.length(), 1.0);
        assert!(Interval::new(2.0, 3.0).clamp_to(0.0, 1.0).is_empty());
    }
}
