//! Number types the matching code is generic over.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn from_usize(k: usize) -> Self;
    fn to_f64(&self) -> f64;
    /// `self <= 0`, up to the type's tolerance.
    fn is_nonpositive(&self) -> bool;
    /// `self < 0`, beyond the type's tolerance.
    fn is_negative(&self) -> bool;
    fn abs(&self) -> Self;
}

/// Absolute tolerance of the floating-point path.
pub const F64_TOL: f64 = 1e-12;

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn from_usize(k: usize) -> Self {
        k as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_nonpositive(&self) -> bool {
        *self <= F64_TOL
    }

    fn is_negative(&self) -> bool {
        *self < -F64_TOL
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }

    /// Exact value of the double.
    fn from_f64(x: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(x).expect("finite capacity")
    }

    fn from_usize(k: usize) -> Self {
        BigRational::from_integer(BigInt::from(k))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_nonpositive(&self) -> bool {
        !self.is_positive()
    }

    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }
}
