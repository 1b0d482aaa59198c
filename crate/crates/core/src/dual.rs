//! Forward-mode differentiation with nestable dual numbers.
//!
//! [`Dual<S>`] carries a value and a single tangent over any [`Real`] base,
//! so `Dual<Dual<f64>>` yields exact second directional derivatives. All
//! barrier and controller expressions are written against [`Real`] and
//! evaluated on lifted states to obtain time derivatives along the flow.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{One, Zero};

/// Scalar field used by every generic expression in this crate.
pub trait Real:
    nalgebra::Scalar
    + Copy
    + Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + From<f64>
{
    /// Primal value with all tangent parts discarded.
    fn re(&self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
}

/// First-order dual number `re + eps * ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Real> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: S) -> Self {
        Self { re, eps: S::zero() }
    }
}

impl<S: Real> Real for Dual<S> {
    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }
}

impl<S: Real> From<f64> for Dual<S> {
    fn from(v: f64) -> Self {
        Self::constant(S::from(v))
    }
}

impl<S: Real> Zero for Dual<S> {
    fn zero() -> Self {
        Self::constant(S::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.eps.is_zero()
    }
}

impl<S: Real> One for Dual<S> {
    fn one() -> Self {
        Self::constant(S::one())
    }
}

impl<S: Real> Add for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl<S: Real> Sub for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl<S: Real> Mul for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl<S: Real> Div for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let re = self.re / rhs.re;
        Self::new(re, (self.eps - re * rhs.eps) / rhs.re)
    }
}

impl<S: Real> Neg for Dual<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<S: Real> AddAssign for Dual<S> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<S: Real> SubAssign for Dual<S> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<S: Real> MulAssign for Dual<S> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<S: Real> DivAssign for Dual<S> {
    fn div_assign(&mut self, rhs: Self) {
        *self = *self / rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly<T: Real>(x: T) -> T {
        // x^3 / (1 + x)
        x * x * x / (T::one() + x)
    }

    #[test]
    fn first_derivative_of_rational() {
        let x = 0.7;
        let d = poly(Dual::new(x, 1.0));
        let exact = (3.0 * x * x * (1.0 + x) - x * x * x) / ((1.0 + x) * (1.0 + x));
        assert!((d.re - poly(x)).abs() < 1e-15);
        assert!((d.eps - exact).abs() < 1e-14);
    }

    #[test]
    fn nested_dual_gives_second_derivative() {
        let x = 0.7_f64;
        let inner = Dual::new(Dual::new(x, 1.0), Dual::new(1.0, 0.0));
        let d = poly(inner);
        // oracle: central difference of the closed-form first derivative
        let fp = |x: f64| (3.0 * x * x * (1.0 + x) - x * x * x) / ((1.0 + x) * (1.0 + x));
        let h = 1e-5;
        let fd = (fp(x + h) - fp(x - h)) / (2.0 * h);
        assert!((d.eps.eps - fd).abs() < 1e-8, "{} vs {}", d.eps.eps, fd);
    }

    #[test]
    fn nalgebra_products_propagate_tangents() {
        use nalgebra::{Matrix3, Vector3};
        let a = Matrix3::<Dual<f64>>::from_fn(|i, j| Dual::new((i + 2 * j) as f64, 1.0));
        let v = Vector3::new(Dual::constant(1.0), Dual::constant(2.0), Dual::constant(3.0));
        let w = a * v;
        // d/dε of each row sum is 1 + 2 + 3
        for i in 0..3 {
            assert_eq!(w[i].eps, 6.0);
        }
    }
}
