//! Forward-mode dual numbers carrying both partial derivatives of a
//! function of `(x, y)`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualNumber {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

impl DualNumber {
    pub const fn new(value: f64, dx: f64, dy: f64) -> Self {
        DualNumber { value, dx, dy }
    }

    pub const fn constant(value: f64) -> Self {
        DualNumber::new(value, 0.0, 0.0)
    }

    /// The seed for `x`: `∂x/∂x = 1`.
    pub const fn var_x(x: f64) -> Self {
        DualNumber::new(x, 1.0, 0.0)
    }

    pub const fn var_y(y: f64) -> Self {
        DualNumber::new(y, 0.0, 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.dx.is_finite() && self.dy.is_finite()
    }

    /// Applies a scalar function with known derivative at `self.value`.
    fn chain(self, value: f64, deriv: f64) -> Self {
        DualNumber::new(value, deriv * self.dx, deriv * self.dy)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s)
    }

    pub fn tan(self) -> Self {
        let t = self.value.tan();
        self.chain(t, 1.0 + t * t)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Self {
        self.chain(self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r)
    }

    /// Uses derivative 0 at the kink.
    pub fn abs(self) -> Self {
        let sign = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.chain(self.value.abs(), sign)
    }

    pub fn powi(self, n: i32) -> Self {
        let deriv = if n == 0 {
            0.0
        } else {
            n as f64 * self.value.powi(n - 1)
        };
        self.chain(self.value.powi(n), deriv)
    }

    /// `self^b` for a constant real exponent.
    pub fn powf(self, b: f64) -> Self {
        self.chain(self.value.powf(b), b * self.value.powf(b - 1.0))
    }

    /// `self^other` through `exp(other · ln self)`; requires `self > 0`.
    pub fn pow(self, other: DualNumber) -> Self {
        let ln_a = self.value.ln();
        let v = self.value.powf(other.value);
        DualNumber::new(
            v,
            v * (other.dx * ln_a + other.value * self.dx / self.value),
            v * (other.dy * ln_a + other.value * self.dy / self.value),
        )
    }
}

impl Add for DualNumber {
    type Output = DualNumber;
    fn add(self, rhs: Self) -> Self {
        DualNumber::new(self.value + rhs.value, self.dx + rhs.dx, self.dy + rhs.dy)
    }
}

impl Sub for DualNumber {
    type Output = DualNumber;
    fn sub(self, rhs: Self) -> Self {
        DualNumber::new(self.value - rhs.value, self.dx - rhs.dx, self.dy - rhs.dy)
    }
}

impl Mul for DualNumber {
    type Output = DualNumber;
    fn mul(self, rhs: Self) -> Self {
        DualNumber::new(
            self.value * rhs.value,
            self.dx * rhs.value + self.value * rhs.dx,
            self.dy * rhs.value + self.value * rhs.dy,
        )
    }
}

impl Div for DualNumber {
    type Output = DualNumber;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.value;
        let q = self.value * inv;
        DualNumber::new(
            q,
            (self.dx - q * rhs.dx) * inv,
            (self.dy - q * rhs.dy) * inv,
        )
    }
}

impl Neg for DualNumber {
    type Output = DualNumber;
    fn neg(self) -> Self {
        DualNumber::new(-self.value, -self.dx, -self.dy)
    }
}
