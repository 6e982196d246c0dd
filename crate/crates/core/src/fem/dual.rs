//! Forward-mode dual numbers over the sixteen local unknowns of a cell, and
//! the scalar abstraction that lets one element kernel produce both the
//! residual and its exact Jacobian.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub const LOCAL_DOFS: usize = 16;

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;
    /// Square root with zero derivative at the origin.
    fn sqrt(self) -> Self;
    /// Value computed externally, with partials against the given arguments.
    fn lift(value: f64, partials: &[(f64, Self)]) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn lift(value: f64, _partials: &[(f64, Self)]) -> Self {
        value
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; LOCAL_DOFS],
}

impl Dual {
    pub fn variable(v: f64, index: usize) -> Self {
        let mut d = [0.0; LOCAL_DOFS];
        d[index] = 1.0;
        Dual { v, d }
    }

    #[inline]
    fn map_d(self, k: f64) -> [f64; LOCAL_DOFS] {
        let mut d = self.d;
        d.iter_mut().for_each(|x| *x *= k);
        d
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(&o.d) {
            *a += b;
        }
        Dual { v: self.v + o.v, d }
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        for (a, b) in self.d.iter_mut().zip(&o.d) {
            *a += b;
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(&o.d) {
            *a -= b;
        }
        Dual { v: self.v - o.v, d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; LOCAL_DOFS];
        for ((r, a), b) in d.iter_mut().zip(&self.d).zip(&o.d) {
            *r = a * o.v + self.v * b;
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut d = [0.0; LOCAL_DOFS];
        for ((r, a), b) in d.iter_mut().zip(&self.d).zip(&o.d) {
            *r = (a - q * b) * inv;
        }
        Dual { v: q, d }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: self.map_d(-1.0) }
    }
}

impl Scalar for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual { v, d: [0.0; LOCAL_DOFS] }
    }
    #[inline]
    fn val(&self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        let k = if r > 0.0 { 0.5 / r } else { 0.0 };
        Dual { v: r, d: self.map_d(k) }
    }
    #[inline]
    fn lift(value: f64, partials: &[(f64, Self)]) -> Self {
        let mut d = [0.0; LOCAL_DOFS];
        for (p, x) in partials {
            if *p != 0.0 {
                for (r, xd) in d.iter_mut().zip(&x.d) {
                    *r += p * xd;
                }
            }
        }
        Dual { v: value, d }
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Dual { v: self.v * k, d: self.map_d(k) }
    }
}
