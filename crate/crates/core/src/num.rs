//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the simulator is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar.
    fn lit(x: f64) -> Self;

    /// Converts an integer count into this scalar.
    fn from_count(n: u64) -> Self {
        Self::lit(n as f64)
    }

    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Round to nearest, ties away from zero.
#[inline]
pub(crate) fn round_half_away<T: Scalar>(x: T) -> T {
    // `Float::round` already breaks ties away from zero
    x.round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_round_away_from_zero() {
        assert_eq!(round_half_away(2.5_f64), 3.0);
        assert_eq!(round_half_away(-2.5_f64), -3.0);
        assert_eq!(round_half_away(0.5_f32), 1.0);
        assert_eq!(round_half_away(1.4999_f64), 1.0);
    }

    #[test]
    fn literals_convert() {
        assert_eq!(f32::lit(0.25), 0.25_f32);
        assert_eq!(f64::from_count(7), 7.0);
        assert_eq!(3.5_f32.to_f64_lossy(), 3.5);
    }
}
