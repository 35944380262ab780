//! Real and complex interval arithmetic.
//!
//! Bounds are computed in round-to-nearest double precision without directed
//! rounding, so enclosures are sound up to floating-point error. Tests pad
//! containment checks with [`DEFAULT_SLACK`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Padding used when checking that a point lies inside a computed bound.
pub const DEFAULT_SLACK: f64 = 1e-12;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T = f64> {
    lo: T,
    hi: T,
}

impl<T: Scalar> fmt::Debug for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo.value(), self.hi.value())
    }
}

impl Interval<f64> {
    /// Validated constructor.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(format!("non-finite interval bound [{lo}, {hi}]")));
        }
        if lo > hi {
            return Err(Error::domain(format!("inverted interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `true` if `x` lies within the interval widened by `slack` on each side.
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }

    /// `true` if `other` is inside `self` widened by `slack`.
    pub fn encloses(&self, other: &Interval, slack: f64) -> bool {
        other.lo >= self.lo - slack && other.hi <= self.hi + slack
    }
}

impl<T: Scalar> Interval<T> {
    /// Builds an interval from bounds the caller already knows are ordered.
    pub(crate) fn from_bounds(lo: T, hi: T) -> Self {
        debug_assert!(
            !(lo.value() > hi.value()),
            "inverted interval [{:?}, {:?}]",
            lo,
            hi
        );
        Self { lo, hi }
    }

    pub fn point(x: T) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> T {
        (self.lo + self.hi).half()
    }

    /// Untracked copy of the bounds.
    pub fn to_f64(&self) -> Interval<f64> {
        Interval {
            lo: self.lo.value(),
            hi: self.hi.value(),
        }
    }

    /// Multiplication by a point scalar in positive/negative-part form:
    /// `lo' = c⁺·lo + c⁻·hi`, `hi' = c⁺·hi + c⁻·lo`.
    pub fn scale(self, c: T) -> Self {
        let zero = T::zero();
        let pos = c.max(zero);
        let neg = c.min(zero);
        Self {
            lo: pos * self.lo + neg * self.hi,
            hi: pos * self.hi + neg * self.lo,
        }
    }

    /// `x²` over the interval; never looser than `self * self`.
    pub fn square(self) -> Self {
        self.lo.note_branch();
        self.hi.note_branch();
        let (lo2, hi2) = (self.lo.square(), self.hi.square());
        if self.lo.value() >= 0.0 {
            Self { lo: lo2, hi: hi2 }
        } else if self.hi.value() <= 0.0 {
            Self { lo: hi2, hi: lo2 }
        } else {
            Self {
                lo: T::zero(),
                hi: lo2.max(hi2),
            }
        }
    }
}

impl<T: Scalar> Add for Interval<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            lo: self.lo + rhs.lo,
            hi: self.hi + rhs.hi,
        }
    }
}

impl<T: Scalar> Sub for Interval<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            lo: self.lo - rhs.hi,
            hi: self.hi - rhs.lo,
        }
    }
}

impl<T: Scalar> Neg for Interval<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl<T: Scalar> Mul for Interval<T> {
    type Output = Self;
    /// Min and max over the four endpoint products.
    fn mul(self, rhs: Self) -> Self {
        let ac = self.lo * rhs.lo;
        let ad = self.lo * rhs.hi;
        let bc = self.hi * rhs.lo;
        let bd = self.hi * rhs.hi;
        Self {
            lo: ac.min(ad).min(bc.min(bd)),
            hi: ac.max(ad).max(bc.max(bd)),
        }
    }
}

/// Box `re × im` enclosing a complex value.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexInterval<T = f64> {
    pub re: Interval<T>,
    pub im: Interval<T>,
}

impl<T: Scalar> fmt::Debug for ComplexInterval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} + {:?}i", self.re, self.im)
    }
}

impl<T: Scalar> ComplexInterval<T> {
    pub fn new(re: Interval<T>, im: Interval<T>) -> Self {
        Self { re, im }
    }

    pub fn point(re: T, im: T) -> Self {
        Self {
            re: Interval::point(re),
            im: Interval::point(im),
        }
    }

    /// Enclosure of `|z|² = re² + im²`.
    pub fn norm_sqr(self) -> Interval<T> {
        self.re.square() + self.im.square()
    }
}

impl ComplexInterval<f64> {
    pub fn contains(&self, re: f64, im: f64, slack: f64) -> bool {
        self.re.contains(re, slack) && self.im.contains(im, slack)
    }
}

impl<T: Scalar> Add for ComplexInterval<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl<T: Scalar> Sub for ComplexInterval<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl<T: Scalar> Mul for ComplexInterval<T> {
    type Output = Self;
    /// `(a + bi)(c + di) = (ac − bd) + (ad + bc)i` with interval operands.
    fn mul(self, rhs: Self) -> Self {
        Self {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn linear_ops() {
        assert_eq!(iv(1.0, 2.0) + iv(3.0, 4.0), iv(4.0, 6.0));
        assert_eq!(iv(0.0, 1.0) - iv(0.0, 1.0), iv(-1.0, 1.0));
        assert_eq!(iv(1.0, 2.0).scale(-3.0), iv(-6.0, -3.0));
        assert_eq!(iv(1.0, 2.0).scale(0.5), iv(0.5, 1.0));
    }

    #[test]
    fn multiplication() {
        assert_eq!(iv(1.0, 2.0) * iv(3.0, 4.0), iv(3.0, 8.0));
        assert_eq!(iv(-1.0, 1.0) * iv(-1.0, 1.0), iv(-1.0, 1.0));
        // endpoint products {-6, -10, 3, 5}
        assert_eq!(iv(-2.0, 1.0) * iv(3.0, 5.0), iv(-10.0, 5.0));
    }

    #[test]
    fn squaring() {
        assert_eq!(iv(-1.0, 2.0).square(), iv(0.0, 4.0));
        assert_eq!(iv(2.0, 3.0).square(), iv(4.0, 9.0));
        assert_eq!(iv(-3.0, -2.0).square(), iv(4.0, 9.0));
    }

    #[test]
    fn squaring_negative_interval_matches_dense_sampling() {
        let a = iv(-3.0, -2.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=10_000 {
            let x = -3.0 + k as f64 * 1e-4;
            lo = lo.min(x * x);
            hi = hi.max(x * x);
        }
        let s = a.square();
        assert!((s.lo() - lo).abs() < 1e-12 && (s.hi() - hi).abs() < 1e-12);
    }

    #[test]
    fn complex_product() {
        let a = ComplexInterval::point(1.0, 2.0);
        let b = ComplexInterval::point(3.0, 4.0);
        let p = a * b;
        assert_eq!((p.re, p.im), (iv(-5.0, -5.0), iv(10.0, 10.0)));

        let a = ComplexInterval::new(iv(0.0, 1.0), iv(0.0, 0.0));
        let b = ComplexInterval::point(2.0, 0.0);
        let p = a * b;
        assert_eq!((p.re, p.im), (iv(0.0, 2.0), iv(0.0, 0.0)));
    }

    #[test]
    fn complex_product_matches_corner_enumeration() {
        let a = ComplexInterval::new(iv(-1.0, 1.0), iv(-1.0, 1.0));
        let b = ComplexInterval::point(1.0, 1.0);
        // Oracle: the product is bilinear in (a.re, a.im), so extremes of each
        // component are attained at the corners of the 2-d box.
        let (mut re, mut im) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for &x in &[-1.0, 1.0] {
            for &y in &[-1.0, 1.0] {
                let r = x * 1.0 - y * 1.0;
                let i = x * 1.0 + y * 1.0;
                re = (re.0.min(r), re.1.max(r));
                im = (im.0.min(i), im.1.max(i));
            }
        }
        let p = a * b;
        assert_eq!(p.re, iv(re.0, re.1));
        assert_eq!(p.im, iv(im.0, im.1));
        assert_eq!(p.re, iv(-2.0, 2.0));
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(matches!(Interval::new(f64::NAN, 1.0), Err(Error::NumericDomain(_))));
        assert!(matches!(Interval::new(0.0, f64::INFINITY), Err(Error::NumericDomain(_))));
        assert!(matches!(Interval::new(2.0, 1.0), Err(Error::NumericDomain(_))));
    }
}
