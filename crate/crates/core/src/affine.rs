//! Affine forms `x₀ + Σ xᵢεᵢ ± r` over a shared noise-symbol space.
//!
//! Every εᵢ ranges over `[-1, 1]`. Linear operations are exact and keep
//! correlations between forms that share symbols. Non-linear operations
//! (products, squares) fold all higher-order error into the single
//! non-negative residual `r`, which never cancels; no fresh symbols are
//! minted for approximation error.

use std::fmt;
use std::ops::{Add, Sub};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::scalar::{sum, Scalar};

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

/// Identifies a [`NoiseSymbolSpace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceId(u64);

/// Allocator for noise symbols, one per propagation run.
#[derive(Debug)]
pub struct NoiseSymbolSpace {
    id: SpaceId,
    next: AtomicU32,
}

impl Default for NoiseSymbolSpace {
    fn default() -> Self {
        Self::new()
    }
}

impl NoiseSymbolSpace {
    pub fn new() -> Self {
        Self {
            id: SpaceId(NEXT_SPACE_ID.fetch_add(1, Ordering::Relaxed)),
            next: AtomicU32::new(0),
        }
    }

    pub fn id(&self) -> SpaceId {
        self.id
    }

    /// Number of symbols allocated so far.
    pub fn len(&self) -> u32 {
        self.next.load(Ordering::Relaxed)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fresh(&self) -> u32 {
        self.next.fetch_add(1, Ordering::Relaxed)
    }

    /// Allocates `count` consecutive symbols and returns the first.
    pub fn fresh_block(&self, count: u32) -> u32 {
        self.next.fetch_add(count, Ordering::Relaxed)
    }
}

/// One affine form. Coefficients are stored sparsely, sorted by symbol.
#[derive(Clone, PartialEq)]
pub struct AffineForm<T = f64> {
    center: T,
    terms: Vec<(u32, T)>,
    residual: T,
    space: Option<SpaceId>,
}

impl<T: Scalar> fmt::Debug for ComplexAffine<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}) + ({:?})i", self.re, self.im)
    }
}

impl<T: Scalar> fmt::Debug for AffineForm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.center.value())?;
        for (s, c) in &self.terms {
            write!(f, " {:+}ε{}", c.value(), s)?;
        }
        write!(f, " ±{}", self.residual.value())
    }
}

impl<T: Scalar> AffineForm<T> {
    /// An exact scalar; compatible with every symbol space.
    pub fn constant(c: T) -> Self {
        Self {
            center: c,
            terms: Vec::new(),
            residual: T::zero(),
            space: None,
        }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    /// `center + coeff·ε_symbol`.
    pub fn with_symbol(space: &NoiseSymbolSpace, symbol: u32, center: T, coeff: T) -> Self {
        let terms = if coeff.is_const_zero() {
            Vec::new()
        } else {
            vec![(symbol, coeff)]
        };
        Self {
            center,
            terms,
            residual: T::zero(),
            space: Some(space.id()),
        }
    }

    /// Builds a form from explicit parts. Terms are sorted and merged; a
    /// negative residual is rejected.
    pub fn from_parts(
        space: Option<&NoiseSymbolSpace>,
        center: T,
        terms: impl IntoIterator<Item = (u32, T)>,
        residual: T,
    ) -> Result<Self> {
        if residual.value() < 0.0 || !residual.value().is_finite() {
            return Err(Error::domain(format!(
                "affine residual must be finite and non-negative, got {}",
                residual.value()
            )));
        }
        let mut terms: Vec<(u32, T)> = terms.into_iter().collect();
        terms.sort_by_key(|(s, _)| *s);
        let mut merged: Vec<(u32, T)> = Vec::with_capacity(terms.len());
        for (s, c) in terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == s => *acc = *acc + c,
                _ => merged.push((s, c)),
            }
        }
        merged.retain(|(_, c)| !c.is_const_zero());
        Ok(Self {
            center,
            terms: merged,
            residual,
            space: space.map(|s| s.id()),
        })
    }

    pub fn center(&self) -> T {
        self.center
    }

    pub fn residual(&self) -> T {
        self.residual
    }

    /// Non-zero coefficients, sorted by symbol.
    pub fn terms(&self) -> &[(u32, T)] {
        &self.terms
    }

    pub fn coefficient(&self, symbol: u32) -> T {
        self.terms
            .binary_search_by_key(&symbol, |(s, _)| *s)
            .map(|i| self.terms[i].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn space(&self) -> Option<SpaceId> {
        self.space
    }

    /// `Σ|xᵢ| + r`: half-width of the concretization.
    pub fn radius(&self) -> T {
        sum(self.terms.iter().map(|(_, c)| c.abs())) + self.residual
    }

    /// `[x₀ − Σ|xᵢ| − r, x₀ + Σ|xᵢ| + r]`.
    pub fn to_interval(&self) -> Interval<T> {
        let rad = self.radius();
        Interval::from_bounds(self.center - rad, self.center + rad)
    }

    /// Value of the linear part at a concrete assignment of the symbols
    /// (symbols missing from `eps` are taken as zero), without the residual.
    pub fn evaluate(&self, eps: impl Fn(u32) -> f64) -> f64 {
        self.center.value()
            + self
                .terms
                .iter()
                .map(|(s, c)| c.value() * eps(*s))
                .sum::<f64>()
    }

    fn joint_space(&self, other: &Self) -> Result<Option<SpaceId>> {
        match (self.space, other.space) {
            (Some(a), Some(b)) if a != b => Err(Error::SymbolSpaceMismatch {
                left: a.0,
                right: b.0,
            }),
            (a, b) => Ok(a.or(b)),
        }
    }

    fn merge(&self, other: &Self, sign: f64) -> Vec<(u32, T)> {
        let neg = sign < 0.0;
        let mut out = Vec::with_capacity(self.terms.len().max(other.terms.len()));
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.terms, &other.terms);
        while i < a.len() || j < b.len() {
            let take = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    let c = if neg { x.1 - y.1 } else { x.1 + y.1 };
                    i += 1;
                    j += 1;
                    (x.0, c)
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    i += 1;
                    *x
                }
                (Some(x), None) => {
                    i += 1;
                    *x
                }
                (_, Some(y)) => {
                    j += 1;
                    (y.0, if neg { -y.1 } else { y.1 })
                }
                (None, None) => unreachable!(),
            };
            if !take.1.is_const_zero() {
                out.push(take);
            }
        }
        out
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            space: self.joint_space(other)?,
            center: self.center + other.center,
            terms: self.merge(other, 1.0),
            residual: self.residual + other.residual,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            space: self.joint_space(other)?,
            center: self.center - other.center,
            terms: self.merge(other, -1.0),
            residual: self.residual + other.residual,
        })
    }

    /// Scalar multiplication: centre and coefficients by `c`, residual by `|c|`.
    pub fn scale(&self, c: T) -> Self {
        let terms = if c.is_const_zero() {
            Vec::new()
        } else {
            self.terms
                .iter()
                .map(|&(s, x)| (s, x * c))
                .filter(|(_, x)| !x.is_const_zero())
                .collect()
        };
        let residual = if self.residual.is_const_zero() {
            T::zero()
        } else {
            self.residual * c.abs()
        };
        Self {
            center: self.center * c,
            terms,
            residual,
            space: self.space,
        }
    }

    /// Adds a point scalar to the centre.
    pub fn shift(&self, c: T) -> Self {
        Self {
            center: self.center + c,
            ..self.clone()
        }
    }

    /// Product of two forms. The linear part is `a₀b₀ + Σ(a₀bᵢ + b₀aᵢ)εᵢ`;
    /// every second-order term is bounded into the residual by
    /// `|a₀|r_b + |b₀|r_a + rad(a)·rad(b)`.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        let space = self.joint_space(other)?;
        let lhs = Self {
            residual: T::zero(),
            ..other.scale(self.center)
        };
        let rhs = Self {
            residual: T::zero(),
            ..self.scale(other.center)
        };
        let linear = lhs.merge(&rhs, 1.0);
        let residual = self.center.abs() * other.residual
            + other.center.abs() * self.residual
            + self.radius() * other.radius();
        Ok(Self {
            center: self.center * other.center,
            terms: linear,
            residual,
            space,
        })
    }

    /// Sound enclosure of `x²` using the min-max (Chebyshev) linear
    /// approximation of `x²` on the concretization `[A, B]`:
    /// slope `α = A + B`, offset `β = −(AB + ((A+B)/2)²)/2`, and maximal
    /// error `(B − A)²/8` added to the residual.
    pub fn square_chebyshev(&self) -> Self {
        let range = self.to_interval();
        let (a, b) = (range.lo(), range.hi());
        let alpha = a + b;
        let mid = alpha.half();
        let beta = -(a * b + mid.square()).half();
        let delta = (b - a).square() * T::constant(0.125);
        let mut out = self.scale(alpha).shift(beta);
        out.residual = out.residual + delta;
        out
    }
}

impl<T: Scalar> Add for &AffineForm<T> {
    type Output = AffineForm<T>;
    /// Panics if the operands live in different symbol spaces; use
    /// [`AffineForm::try_add`] to handle that case.
    fn add(self, rhs: Self) -> AffineForm<T> {
        self.try_add(rhs).expect("affine add")
    }
}

impl<T: Scalar> Sub for &AffineForm<T> {
    type Output = AffineForm<T>;
    fn sub(self, rhs: Self) -> AffineForm<T> {
        self.try_sub(rhs).expect("affine sub")
    }
}

/// A complex amplitude as a pair of real affine forms.
#[derive(Clone, PartialEq)]
pub struct ComplexAffine<T = f64> {
    pub re: AffineForm<T>,
    pub im: AffineForm<T>,
}

impl<T: Scalar> ComplexAffine<T> {
    pub fn new(re: AffineForm<T>, im: AffineForm<T>) -> Self {
        Self { re, im }
    }

    /// Product with a point complex scalar `c_re + i·c_im`.
    pub fn scale_complex(&self, c_re: T, c_im: T) -> Self {
        Self {
            re: &self.re.scale(c_re) - &self.im.scale(c_im),
            im: &self.im.scale(c_re) + &self.re.scale(c_im),
        }
    }

    /// `|z|² = re² + im²` via Chebyshev squaring of each part.
    pub fn norm_sqr(&self) -> AffineForm<T> {
        &self.re.square_chebyshev() + &self.im.square_chebyshev()
    }

    /// Full complex product of two affine amplitudes.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        let rr = self.re.try_mul(&other.re)?;
        let ii = self.im.try_mul(&other.im)?;
        let ri = self.re.try_mul(&other.im)?;
        let ir = self.im.try_mul(&other.re)?;
        Ok(Self {
            re: rr.try_sub(&ii)?,
            im: ri.try_add(&ir)?,
        })
    }
}
