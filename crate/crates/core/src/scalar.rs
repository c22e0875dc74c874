//! Numeric abstraction for metric arithmetic.
//!
//! Every score in the harness is a ratio of small counts (token overlaps,
//! instance tallies). Metric code is written once against [`Scalar`] and
//! instantiated either with floats for reporting or with exact rationals
//! for oracle comparisons, where equality must hold without tolerance.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};

/// A field-like number type that metric formulas are evaluated in.
pub trait Scalar: Num + Copy + PartialOrd + Debug + ToPrimitive + Send + Sync + 'static {
    /// Lifts a count into the scalar type.
    fn from_count(n: usize) -> Self;

    /// `num / den`, or zero when `den == 0`.
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Self::zero()
        } else {
            Self::from_count(num) / Self::from_count(den)
        }
    }

    /// Lossy conversion for serialization and display.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Rounds to the nearest integer, halves away from zero.
    fn round_half_away(self) -> i64;
}

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn from_count(n: usize) -> Self {
                n as $t
            }

            fn round_half_away(self) -> i64 {
                self.round() as i64
            }
        }
    )*};
}

float_scalar!(f32, f64);

macro_rules! rational_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for Ratio<$t> {
            fn from_count(n: usize) -> Self {
                Ratio::from_integer(<$t>::try_from(n).expect("count fits the rational base type"))
            }

            fn round_half_away(self) -> i64 {
                // Ratio::round rounds half away from zero.
                self.round().to_integer() as i64
            }
        }
    )*};
}

rational_scalar!(i64, u64, i128);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_guards_zero_denominator() {
        assert_eq!(f64::ratio(3, 0), 0.0);
        assert_eq!(Ratio::<i64>::ratio(3, 0), Ratio::from_integer(0));
    }

    #[test]
    fn rational_rounding_is_half_away_from_zero() {
        assert_eq!(Ratio::<i64>::new(1, 2).round_half_away(), 1);
        assert_eq!(Ratio::<i64>::new(5, 2).round_half_away(), 3);
        assert_eq!(Ratio::<i64>::new(2500, 31).round_half_away(), 81);
        assert_eq!((2.5f64).round_half_away(), 3);
    }
}
