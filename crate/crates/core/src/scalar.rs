use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the statistical routines are written against.
///
/// Implemented for `f32` and `f64`. Accuracy contracts in the docs refer to
/// `f64`; `f32` gives the same algorithms at single precision.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Returns `true` when `v` lies in the closed unit interval.
#[inline]
pub(crate) fn in_unit_interval<T: Scalar>(v: T) -> bool {
    v >= T::zero() && v <= T::one()
}

/// Returns `true` when `v` lies in the open unit interval.
#[inline]
pub(crate) fn in_open_unit_interval<T: Scalar>(v: T) -> bool {
    v > T::zero() && v < T::one()
}
