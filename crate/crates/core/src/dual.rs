//! Second-order forward-mode dual numbers.
//!
//! A [`Dual2`] carries a value together with its first and second derivative
//! along one direction. Seeding with [`Dual2::var`] and pushing the number
//! through a closed-form expression gives `f(x)`, `f'(x)` and `f''(x)` in one
//! pass, without finite-difference noise.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Dual2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    /// Independent variable at `x`.
    pub const fn var(x: f64) -> Self {
        Self::new(x, 1.0, 0.0)
    }

    pub const fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0)
    }

    /// Lift a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    pub fn chain(self, g0: f64, g1: f64, g2: f64) -> Self {
        Self::new(g0, g1 * self.d1, g2 * self.d1 * self.d1 + g1 * self.d2)
    }

    pub fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(self.v.ln(), inv, -inv * inv)
    }

    /// `ln(1 + self)`, accurate for small arguments.
    pub fn ln_1p(self) -> Self {
        let inv = 1.0 / (1.0 + self.v);
        self.chain(self.v.ln_1p(), inv, -inv * inv)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        if s == 0.0 {
            return self.chain(0.0, f64::INFINITY, f64::NEG_INFINITY);
        }
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    /// Absolute value with the subgradient 0 at the origin.
    pub fn abs(self) -> Self {
        let sg = if self.v > 0.0 {
            1.0
        } else if self.v < 0.0 {
            -1.0
        } else {
            0.0
        };
        Self::new(self.v.abs(), sg * self.d1, sg * self.d2)
    }

    pub fn atan(self) -> Self {
        let q = 1.0 / (1.0 + self.v * self.v);
        self.chain(self.v.atan(), q, -2.0 * self.v * q * q)
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        let g0 = self.v.powi(n);
        let g1 = if n == 0 { 0.0 } else { nf * self.v.powi(n - 1) };
        let g2 = if n == 0 || n == 1 { 0.0 } else { nf * (nf - 1.0) * self.v.powi(n - 2) };
        self.chain(g0, g1, g2)
    }

    /// Real power. Integer exponents also work for negative bases; at a zero
    /// base the derivatives of a fractional power are reported as zero when
    /// the exponent exceeds the derivative order and infinite otherwise.
    pub fn powf(self, p: f64) -> Self {
        if p.fract() == 0.0 && p.abs() < 1024.0 {
            return self.powi(p as i32);
        }
        let x = self.v;
        if x == 0.0 {
            let g1 = if p > 1.0 { 0.0 } else { f64::INFINITY };
            let g2 = if p > 2.0 { 0.0 } else { f64::INFINITY };
            // a zero seed direction keeps constants finite
            let d1 = if self.d1 == 0.0 { 0.0 } else { g1 * self.d1 };
            let d2 = if self.d1 == 0.0 && self.d2 == 0.0 { 0.0 } else { g2 * self.d1 * self.d1 + g1 * self.d2 };
            return Self::new(0.0, d1, d2);
        }
        let g0 = x.powf(p);
        self.chain(g0, p * g0 / x, p * (p - 1.0) * g0 / (x * x))
    }
}

impl From<f64> for Dual2 {
    fn from(c: f64) -> Self {
        Self::constant(c)
    }
}

impl Add for Dual2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Dual2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Dual2 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.d1 * o.v + self.v * o.d1, self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2)
    }
}

impl Div for Dual2 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let q1 = (self.d1 - q * o.d1) * inv;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) * inv;
        Self::new(q, q1, q2)
    }
}

impl Neg for Dual2 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d1, -self.d2)
    }
}

impl Add<f64> for Dual2 {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Self::new(self.v + c, self.d1, self.d2)
    }
}

impl Sub<f64> for Dual2 {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Self::new(self.v - c, self.d1, self.d2)
    }
}

impl Mul<f64> for Dual2 {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Self::new(self.v * c, self.d1 * c, self.d2 * c)
    }
}

impl Div<f64> for Dual2 {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Self::new(self.v / c, self.d1 / c, self.d2 / c)
    }
}

impl Add<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn add(self, d: Dual2) -> Dual2 {
        d + self
    }
}

impl Sub<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn sub(self, d: Dual2) -> Dual2 {
        Dual2::new(self - d.v, -d.d1, -d.d2)
    }
}

impl Mul<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn mul(self, d: Dual2) -> Dual2 {
        d * self
    }
}

impl Div<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn div(self, d: Dual2) -> Dual2 {
        Dual2::constant(self) / d
    }
}
