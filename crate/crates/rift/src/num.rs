//! Scalar abstraction for the numeric pipeline.

use std::fmt::Display;

use num_traits::{Float, FloatConst, FromPrimitive};
use rustfft::FftNum;
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar the pipeline is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + FftNum + Serialize + DeserializeOwned + Display
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lifting an `f64` constant into the generic scalar type.
#[inline]
pub(crate) fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

/// Shorthand for lifting a `usize` into the generic scalar type.
#[inline]
pub(crate) fn cast_usize<T: Scalar>(x: usize) -> T {
    T::from_usize(x).expect("count representable in scalar type")
}
