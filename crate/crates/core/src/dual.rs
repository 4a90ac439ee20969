//! Forward-mode automatic differentiation with fixed-size dual numbers.
//!
//! [`Dual<T, N>`] carries a value and N partial derivatives. Nesting
//! (`Dual<Dual<f64, N>, N>`) yields exact second derivatives; one evaluation
//! of a closed-form field through nested duals returns the value, the full
//! gradient and the full Hessian.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic interface shared by `f64` and dual numbers so field expressions
/// can be written once and differentiated by instantiation.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn sqrt(self) -> Self;
    /// Underlying numeric value with all derivative structure stripped.
    fn value(self) -> f64;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn value(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub v: T,
    pub d: [T; N],
}

impl<T: Scalar, const N: usize> Dual<T, N> {
    pub fn constant(v: T) -> Self {
        Dual { v, d: [T::zero(); N] }
    }

    /// Independent variable with unit seed in slot `k`.
    pub fn variable(v: T, k: usize) -> Self {
        let mut d = [T::zero(); N];
        d[k] = T::one();
        Dual { v, d }
    }
}

impl<T: Scalar, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] + rhs.d[i];
        }
        Dual { v: self.v + rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] - rhs.d[i];
        }
        Dual { v: self.v - rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = T::one() / rhs.v;
        let v = self.v * inv;
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Dual { v, d }
    }
}

impl<T: Scalar, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = -d[i];
        }
        Dual { v: -self.v, d }
    }
}

impl<T: Scalar, const N: usize> Scalar for Dual<T, N> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }

    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        let half_inv = T::from_f64(0.5) / r;
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = self.d[i] * half_inv;
        }
        Dual { v: r, d }
    }

    fn value(self) -> f64 {
        self.v.value()
    }
}

/// First-order dual over (t, x1, x2, x3).
pub type D4 = Dual<f64, 4>;
/// Spatial-only first-order dual.
pub type D3 = Dual<f64, 3>;
/// Nested spatial dual for second derivatives.
pub type DD3 = Dual<Dual<f64, 3>, 3>;

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Scalar>(x: T, y: T) -> T {
        // x^2 y + sqrt(x + 3 y) - y / x
        x * x * y + (x + T::from_f64(3.0) * y).sqrt() - y / x
    }

    #[test]
    fn first_derivatives() {
        let (x, y) = (1.3, 0.7);
        let fx = f(Dual::<f64, 2>::variable(x, 0), Dual::constant(y));
        let fy = f(Dual::<f64, 2>::constant(x), Dual::variable(y, 1));
        let exact_dx = 2.0 * x * y + 0.5 / (x + 3.0 * y).sqrt() + y / (x * x);
        let exact_dy = x * x + 1.5 / (x + 3.0 * y).sqrt() - 1.0 / x;
        assert!((fx.d[0] - exact_dx).abs() < 1e-14);
        assert!((fy.d[1] - exact_dy).abs() < 1e-14);
    }

    #[test]
    fn second_derivatives_nested() {
        let (x, y) = (1.3, 0.7);
        // outer seeds d/dx, inner seeds d/dy -> mixed partial in d[0].d[1]
        let xx = Dual::<Dual<f64, 2>, 2>::variable(Dual::variable(x, 0), 0);
        let yy = Dual::<Dual<f64, 2>, 2>::variable(Dual::variable(y, 1), 1);
        let r = f(xx, yy);
        let s = (x + 3.0 * y).sqrt();
        let exact_dxdy = 2.0 * x - 0.75 / (s * s * s) + 1.0 / (x * x);
        let exact_dxx = 2.0 * y - 0.25 / (s * s * s) - 2.0 * y / (x * x * x);
        assert!((r.d[0].d[1] - exact_dxdy).abs() < 1e-13);
        assert!((r.d[1].d[0] - exact_dxdy).abs() < 1e-13);
        assert!((r.d[0].d[0] - exact_dxx).abs() < 1e-13);
    }
}
