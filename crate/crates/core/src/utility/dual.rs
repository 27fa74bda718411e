//! Forward-mode dual numbers.
//!
//! A [`Dual`] carries a value and one directional derivative. Expression
//! gradients are assembled by seeding one coordinate at a time.

use std::ops::{Add, Div, Mul, Sub};

/// Arithmetic needed by the expression evaluator. Implemented for plain `f64`
/// and for [`Dual`] so a single tree walk serves both value and derivative.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn powf(self, e: f64) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }

    pub fn variable(re: f64) -> Self {
        Dual { re, eps: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.re * rhs.re, self.eps * rhs.re + self.re * rhs.eps)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let q = self.re / rhs.re;
        Dual::new(q, (self.eps - q * rhs.eps) / rhs.re)
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual::new(v, 0.0)
    }

    #[inline]
    fn powf(self, e: f64) -> Self {
        // d/dx x^e = e x^(e-1); a zero tangent contributes nothing even where
        // the derivative of the power itself blows up.
        let d = if self.eps == 0.0 {
            0.0
        } else {
            e * self.re.powf(e - 1.0) * self.eps
        };
        Dual::new(self.re.powf(e), d)
    }

    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }

    #[inline]
    fn exp(self) -> Self {
        let v = self.re.exp();
        Dual::new(v, v * self.eps)
    }

    #[inline]
    fn sqrt(self) -> Self {
        let v = self.re.sqrt();
        let d = if self.eps == 0.0 { 0.0 } else { self.eps / (2.0 * v) };
        Dual::new(v, d)
    }
}
