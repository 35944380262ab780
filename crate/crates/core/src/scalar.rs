//! The real-scalar abstraction every propagation kernel is written against.
//!
//! Kernels are generic over [`Scalar`] so that the same code runs on plain
//! `f64` for inference and on [`Var`](crate::autodiff::Var) when gradients
//! with respect to circuit parameters or input features are needed.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

pub trait Scalar:
    Copy + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;

    fn value(self) -> f64;

    /// Larger operand; on an exact tie the first operand is selected.
    fn max(self, other: Self) -> Self;

    /// Smaller operand; on an exact tie the first operand is selected.
    fn min(self, other: Self) -> Self;

    /// `|x|`, with zero derivative at `x = 0`.
    fn abs(self) -> Self;

    fn square(self) -> Self;

    fn cos(self) -> Self;

    fn sin(self) -> Self;

    fn exp(self) -> Self;

    fn ln(self) -> Self;

    /// True only for values that are known to be an exact, untracked zero.
    fn is_const_zero(self) -> bool;

    /// Records that a branch was taken based on the sign of `self`.
    ///
    /// Plain floats ignore this; tracked scalars keep the closest distance to
    /// a branch point so gradient checks can skip points next to a kink.
    fn note_branch(self) {}

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn half(self) -> Self {
        self * Self::constant(0.5)
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    #[inline]
    fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }

    #[inline]
    fn square(self) -> Self {
        self * self
    }

    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }

    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn is_const_zero(self) -> bool {
        self == 0.0
    }
}

/// Sums a sequence left to right, starting from the first element.
pub fn sum<T: Scalar>(items: impl IntoIterator<Item = T>) -> T {
    let mut iter = items.into_iter();
    match iter.next() {
        Some(first) => iter.fold(first, |acc, x| acc + x),
        None => T::zero(),
    }
}
