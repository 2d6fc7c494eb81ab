//! Scalar abstraction shared by the plain `f64` scoring path and the
//! reverse-mode tape used for gradients.
//!
//! Geometry and scoring code is written once against this trait; plugging in
//! [`crate::tape::Var`] yields exact derivatives of the very same arithmetic
//! that produces forward scores.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Current numeric value (used for branch decisions, never differentiated).
    fn value(self) -> f64;

    /// A constant with no derivative, allocated in the same context as `self`.
    fn constant(self, c: f64) -> Self;

    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn constant(self, c: f64) -> f64 {
        c
    }

    #[inline]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }

    #[inline]
    fn sin(self) -> f64 {
        f64::sin(self)
    }

    #[inline]
    fn cos(self) -> f64 {
        f64::cos(self)
    }

    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> f64 {
        f64::ln(self)
    }

    #[inline]
    fn ln_1p(self) -> f64 {
        f64::ln_1p(self)
    }
}

/// Numerically stable softplus, usable on both scalar paths.
/// softplus(x) = ln(1 + e^x); for x > 0 rewritten as x + ln(1 + e^-x).
pub fn softplus<T: Real>(x: T) -> T {
    if x.value() > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
