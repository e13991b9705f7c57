use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;

/// Forward-mode dual number. The tangent type equals the value type, so
/// duals nest: `Dual<Dual<f64>>` carries exact second-order information.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T: Real> {
    pub value: T,
    pub tangent: T,
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(value: T, tangent: T) -> Self {
        Dual { value, tangent }
    }

    /// Lift a value with zero tangent.
    #[inline]
    pub fn lift(value: T) -> Self {
        Dual {
            value,
            tangent: T::constant(0.0),
        }
    }
}

impl Dual<f64> {
    /// A dual with the given value and tangent seed.
    #[inline]
    pub fn seeded(value: f64, tangent: f64) -> Self {
        Dual { value, tangent }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.value + rhs.value, self.tangent + rhs.tangent)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.value - rhs.value, self.tangent - rhs.tangent)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual::new(
            self.value * rhs.value,
            self.value * rhs.tangent + self.tangent * rhs.value,
        )
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Dual::new(q, (self.tangent - q * rhs.tangent) / rhs.value)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.value, -self.tangent)
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual::lift(T::constant(v))
    }

    #[inline]
    fn primal(self) -> f64 {
        self.value.primal()
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        Dual::new(e, e * self.tangent)
    }

    // derivative factors are written multiplicatively so a Jet evaluates
    // bit-identically to per-direction Duals

    #[inline]
    fn ln(self) -> Self {
        Dual::new(
            self.value.ln(),
            self.tangent * (T::constant(1.0) / self.value),
        )
    }

    #[inline]
    fn log1p(self) -> Self {
        Dual::new(
            self.value.log1p(),
            self.tangent * (T::constant(1.0) / (T::constant(1.0) + self.value)),
        )
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Dual::new(s, self.tangent * (T::constant(0.5) / s))
    }

    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.value.sin(), self.tangent * self.value.cos())
    }

    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.value.cos(), -(self.tangent * self.value.sin()))
    }

    #[inline]
    fn abs(self) -> Self {
        let v = self.value.primal();
        let sign = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            f64::NAN
        };
        Dual::new(self.value.abs(), self.tangent * T::constant(sign))
    }
}

/// Forward-mode jet carrying `N` tangent directions at once. Functionally
/// equivalent to `N` separate [`Dual`] passes at a fraction of the cost;
/// the tracker uses `Jet<Dual<f64>, 6>` to batch its pose directions around
/// the inner temporal derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T: Real, const N: usize> {
    pub value: T,
    pub tangent: [T; N],
}

impl<T: Real, const N: usize> Jet<T, N> {
    #[inline]
    pub fn new(value: T, tangent: [T; N]) -> Self {
        Jet { value, tangent }
    }

    #[inline]
    pub fn lift(value: T) -> Self {
        Jet {
            value,
            tangent: [T::constant(0.0); N],
        }
    }

    #[inline]
    fn map_tangent(self, value: T, scale: T) -> Self {
        let mut t = self.tangent;
        for ti in t.iter_mut() {
            *ti = *ti * scale;
        }
        Jet { value, tangent: t }
    }
}

impl<T: Real, const N: usize> Add for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut t = self.tangent;
        for (ti, ri) in t.iter_mut().zip(rhs.tangent.iter()) {
            *ti = *ti + *ri;
        }
        Jet::new(self.value + rhs.value, t)
    }
}

impl<T: Real, const N: usize> Sub for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut t = self.tangent;
        for (ti, ri) in t.iter_mut().zip(rhs.tangent.iter()) {
            *ti = *ti - *ri;
        }
        Jet::new(self.value - rhs.value, t)
    }
}

impl<T: Real, const N: usize> Mul for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut t = self.tangent;
        for (ti, ri) in t.iter_mut().zip(rhs.tangent.iter()) {
            *ti = self.value * *ri + *ti * rhs.value;
        }
        Jet::new(self.value * rhs.value, t)
    }
}

impl<T: Real, const N: usize> Div for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        let mut t = self.tangent;
        for (ti, ri) in t.iter_mut().zip(rhs.tangent.iter()) {
            *ti = (*ti - q * *ri) / rhs.value;
        }
        Jet::new(q, t)
    }
}

impl<T: Real, const N: usize> Neg for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut t = self.tangent;
        for ti in t.iter_mut() {
            *ti = -*ti;
        }
        Jet::new(-self.value, t)
    }
}

impl<T: Real, const N: usize> Real for Jet<T, N> {
    #[inline]
    fn constant(v: f64) -> Self {
        Jet::lift(T::constant(v))
    }

    #[inline]
    fn primal(self) -> f64 {
        self.value.primal()
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.map_tangent(e, e)
    }

    #[inline]
    fn ln(self) -> Self {
        self.map_tangent(self.value.ln(), T::constant(1.0) / self.value)
    }

    #[inline]
    fn log1p(self) -> Self {
        self.map_tangent(
            self.value.log1p(),
            T::constant(1.0) / (T::constant(1.0) + self.value),
        )
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.map_tangent(s, T::constant(0.5) / s)
    }

    #[inline]
    fn sin(self) -> Self {
        self.map_tangent(self.value.sin(), self.value.cos())
    }

    #[inline]
    fn cos(self) -> Self {
        self.map_tangent(self.value.cos(), -self.value.sin())
    }

    #[inline]
    fn abs(self) -> Self {
        let v = self.value.primal();
        let sign = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            f64::NAN
        };
        self.map_tangent(self.value.abs(), T::constant(sign))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn composite<T: Real>(x: T, y: T) -> T {
        let a = (x * y).sin() + (x - y).exp() / (T::constant(2.0) + y.cos());
        (a * a + T::constant(1.0)).sqrt().ln() + x.sigmoid() * y.softplus()
    }

    proptest! {
        // Dual arithmetic on zero tangents reproduces scalar arithmetic
        // bit for bit.
        #[test]
        fn zero_tangent_matches_scalar(x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let d = composite(Dual::lift(x), Dual::lift(y));
            let s = composite(x, y);
            prop_assert_eq!(d.value.to_bits(), s.to_bits());
            prop_assert_eq!(d.tangent, 0.0);
        }

        // A jet is just several duals evaluated at once.
        #[test]
        fn jet_matches_per_direction_duals(x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let jx = Jet::<f64, 2>::new(x, [1.0, 0.0]);
            let jy = Jet::<f64, 2>::new(y, [0.0, 1.0]);
            let j = composite(jx, jy);
            let dx = composite(Dual::seeded(x, 1.0), Dual::lift(y));
            let dy = composite(Dual::lift(x), Dual::seeded(y, 1.0));
            prop_assert_eq!(j.value.to_bits(), dx.value.to_bits());
            prop_assert_eq!(j.tangent[0].to_bits(), dx.tangent.to_bits());
            prop_assert_eq!(j.tangent[1].to_bits(), dy.tangent.to_bits());
        }
    }

    #[test]
    fn nested_dual_second_derivative_of_cube() {
        // f(x) = x^3, f''(x) = 6x
        let x = Dual::new(Dual::seeded(2.0, 1.0), Dual::seeded(1.0, 0.0));
        let y = x * x * x;
        assert_eq!(y.value.value, 8.0);
        assert_eq!(y.value.tangent, 12.0);
        assert_eq!(y.tangent.value, 12.0);
        assert_eq!(y.tangent.tangent, 12.0); // 6x = 12
    }

    #[test]
    fn jet_of_dual_mixed_second_order() {
        // f(u, a, b) = sin(a u) * b; check d/da df/du and d/db df/du.
        let (u0, a0, b0) = (0.4, 1.3, -0.8);
        let u = Jet::<Dual<f64>, 2>::lift(Dual::seeded(u0, 1.0));
        let a = Jet::<Dual<f64>, 2>::new(Dual::lift(a0), [Dual::lift(1.0), Dual::lift(0.0)]);
        let b = Jet::<Dual<f64>, 2>::new(Dual::lift(b0), [Dual::lift(0.0), Dual::lift(1.0)]);
        let f = (a * u).sin() * b;
        // df/du = a b cos(a u)
        assert_relative_eq!(f.value.tangent, a0 * b0 * (a0 * u0).cos(), max_relative = 1e-12);
        // d/da df/du = b cos(au) - a b u sin(au)
        let dda = b0 * (a0 * u0).cos() - a0 * b0 * u0 * (a0 * u0).sin();
        assert_relative_eq!(f.tangent[0].tangent, dda, max_relative = 1e-12);
        // d/db df/du = a cos(au)
        assert_relative_eq!(f.tangent[1].tangent, a0 * (a0 * u0).cos(), max_relative = 1e-12);
    }

    #[test]
    fn stable_softplus_extremes() {
        assert_eq!(800.0f64.softplus(), 800.0);
        assert_eq!((-800.0f64).softplus(), 0.0);
        assert!(Real::sigmoid(800.0f64) <= 1.0);
        assert!(Real::sigmoid(-800.0f64) >= 0.0);
    }
}
