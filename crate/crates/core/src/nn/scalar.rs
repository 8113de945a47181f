//! Scalar abstraction over f64 and forward-mode dual numbers.
//!
//! The network math in [`super::backprop`] is generic over [`Real`], so the
//! same code path evaluates plain gradients (f64) and exact Hessian-vector
//! products (a dual-number pass through the gradient computation).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub(crate) trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn lift(v: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Real for f64 {
    fn lift(v: f64) -> Self {
        v
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// Value plus directional derivative.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Dual {
    pub fn new(v: f64, t: f64) -> Self {
        Self { v, t }
    }
}

impl PartialEq for Dual {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
    }
}

impl PartialOrd for Dual {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.v + rhs.v, self.t + rhs.t)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.v - rhs.v, self.t - rhs.t)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.v * rhs.v, self.v * rhs.t + self.t * rhs.v)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        Self::new(self.v / rhs.v, (self.t * rhs.v - self.v * rhs.t) / (rhs.v * rhs.v))
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.t)
    }
}

impl Real for Dual {
    fn lift(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, self.t * e)
    }
    fn ln(self) -> Self {
        Self::new(self.v.ln(), self.t / self.v)
    }
}
