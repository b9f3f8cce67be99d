//! Floating-point abstraction so the network runs in `f32` for training and
//! serving and in `f64` for gradient checking.
//!
//! All transcendental functions route through `libm`, which is a pure-Rust
//! implementation and therefore bit-reproducible across targets.

use core::fmt::Debug;
use core::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;
    fn erf(self) -> Self;
    fn abs(self) -> Self;

    #[inline]
    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::logf(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        libm::log1pf(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn abs(self) -> Self {
        libm::fabsf(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        libm::log1p(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn abs(self) -> Self {
        libm::fabs(self)
    }
}

const INV_SQRT2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu<S: Scalar>(x: S) -> S {
    S::from_f64(0.5) * x * (S::ONE + (x * S::from_f64(INV_SQRT2)).erf())
}

/// d/dx GELU(x) = Phi(x) + x * phi(x).
#[inline]
pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let cdf = S::from_f64(0.5) * (S::ONE + (x * S::from_f64(INV_SQRT2)).erf());
    let pdf = S::from_f64(INV_SQRT_2PI) * (-(x * x) * S::from_f64(0.5)).exp();
    cdf + x * pdf
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::ZERO {
        S::ONE / (S::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::ONE + e)
    }
}

/// log(1 + exp(x)) without overflow.
#[inline]
pub fn softplus<S: Scalar>(x: S) -> S {
    if x > S::ZERO {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_of_zero_is_half() {
        assert_eq!(sigmoid(0.0f32), 0.5);
        assert_eq!(sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn gelu_zero_and_derivative() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu_grad(0.0f64) - 0.5).abs() < 1e-15);
        for &x in &[-2.0f64, -0.3, 0.7, 3.1] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-5.0f64, -0.5, 0.0, 0.5, 5.0] {
            let naive = libm::log(1.0 + libm::exp(x));
            assert!((softplus(x) - naive).abs() < 1e-12);
        }
        assert!(softplus(1000.0f64).is_finite());
    }
}
