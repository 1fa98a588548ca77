//! Scalar abstraction shared by the kinematic, pulse and state-vector code.
//!
//! Everything that is plain real arithmetic is written against [`Real`] so the
//! same routines run in `f32` (cheap sweeps) or `f64` (the default used by the
//! crate-root aliases and by the optimizers).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this type.
    fn lit(value: f64) -> Self;

    fn as_f64(self) -> f64;

    fn from_usize_lossy(value: usize) -> Self {
        Self::lit(value as f64)
    }

    fn two_pi() -> Self {
        Self::TAU()
    }
}

impl Real for f32 {
    #[inline]
    fn lit(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(value: f64) -> Self {
        value
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Unnormalized cardinal sine, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-8) {
        T::one() - x * x / T::lit(6.0)
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinc_zeros_at_multiples_of_pi() {
        for k in 1..5 {
            let x = std::f64::consts::PI * k as f64;
            assert!(sinc(x).abs() < 1e-15);
        }
        assert_eq!(sinc(0.0f64), 1.0);
        assert!((sinc(1e-9f32) - 1.0).abs() < 1e-7);
    }
}
