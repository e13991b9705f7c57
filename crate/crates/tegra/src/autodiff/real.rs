use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar kinds the rendering and tracking code is generic over: plain `f64`
/// or any forward-mode derivative carrier. Arithmetic obeys the exact chain
/// rule for every listed primitive.
///
/// `primal` exposes the underlying point of evaluation so numeric code can
/// branch (activation signs, small-angle fallbacks) without disturbing
/// tangent propagation.
pub trait Real:
    Copy
    + Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;

    /// The innermost (undifferentiated) value.
    fn primal(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn log1p(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;

    /// Numerically stable logistic function.
    fn sigmoid(self) -> Self {
        if self.primal() >= 0.0 {
            Self::constant(1.0) / (Self::constant(1.0) + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::constant(1.0) + e)
        }
    }

    /// log(1 + e^x) computed as max(x, 0) + log1p(e^-|x|) to avoid overflow.
    fn softplus(self) -> Self {
        if self.primal() > 0.0 {
            self + (-self).exp().log1p()
        } else {
            self.exp().log1p()
        }
    }

    fn relu(self) -> Self {
        if self.primal() > 0.0 {
            self
        } else {
            Self::constant(0.0)
        }
    }
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn primal(self) -> f64 {
        self
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
    fn log1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
}
