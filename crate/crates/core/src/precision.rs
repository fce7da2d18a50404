//! Scalar types the coefficient engine can run over.
//!
//! [`Real`] is implemented for `f64` and for the 256-bit binary float
//! [`Ext`]. Complex arithmetic is borrowed from `num_complex::Complex<T>`;
//! the transcendental functions the series code needs live on [`CReal`].

use std::fmt::{Debug, Display};
use std::ops::Neg;

use f256::f256;
use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_traits::{Num, ToPrimitive, Zero};

/// Extended-precision real (237-bit significand).
pub type Ext = f256;

pub trait Real:
    Copy + Num + Neg<Output = Self> + PartialOrd + Debug + Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin_cos(self) -> (Self, Self);
    fn atan2(self, x: Self) -> Self;
    fn abs(self) -> Self;
    fn pi() -> Self;
    /// Relative spacing of the format.
    fn epsilon() -> Self;

    fn from_i64(n: i64) -> Self {
        Self::from_f64(n as f64)
    }

    /// Exact-as-possible conversion of `num / den`.
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self;
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
    fn epsilon() -> Self {
        f64::EPSILON
    }
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
        let r = num_rational::BigRational::new(num.clone(), den.clone());
        r.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f256 {
    fn from_f64(x: f64) -> Self {
        f256::from(x)
    }
    fn to_f64(self) -> f64 {
        // f256 exposes no direct narrowing; its shortest round-trip
        // scientific form parses exactly to the nearest double.
        format!("{:e}", self).parse().unwrap_or(f64::NAN)
    }
    fn exp(self) -> Self {
        f256::exp(&self)
    }
    fn ln(self) -> Self {
        f256::ln(&self)
    }
    fn sqrt(self) -> Self {
        f256::sqrt(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        f256::sin_cos(&self)
    }
    fn atan2(self, x: Self) -> Self {
        f256::atan2(&self, &x)
    }
    fn abs(self) -> Self {
        f256::abs(&self)
    }
    fn pi() -> Self {
        ::f256::consts::PI
    }
    fn epsilon() -> Self {
        f256::EPSILON
    }
    fn from_i64(n: i64) -> Self {
        f256::from(n)
    }
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
        bigint_to_ext(num) / bigint_to_ext(den)
    }
}

fn bigint_to_ext(n: &BigInt) -> f256 {
    // Base-2^64 digits, most significant first; 256-bit rounding per step
    // keeps the relative error at the format's precision.
    let (sign, digits) = n.to_u64_digits();
    let radix = f256::from(u128::from(u64::MAX) + 1);
    let mut acc = f256::zero();
    for d in digits.iter().rev() {
        acc = acc * radix + f256::from(*d);
    }
    if sign == num_bigint::Sign::Minus {
        -acc
    } else {
        acc
    }
}

/// Transcendental functions on complex values over a [`Real`].
pub trait CReal<T: Real> {
    fn cexp(self) -> Complex<T>;
    fn cln(self) -> Complex<T>;
    fn csqrt(self) -> Complex<T>;
    fn cabs(self) -> T;
    fn carg(self) -> T;
    fn to_c64(self) -> Complex64;
    fn from_c64(z: Complex64) -> Complex<T>;
    fn scale(self, k: T) -> Complex<T>;
}

impl<T: Real> CReal<T> for Complex<T> {
    fn cexp(self) -> Complex<T> {
        let m = self.re.exp();
        let (s, c) = self.im.sin_cos();
        Complex::new(m * c, m * s)
    }
    fn cln(self) -> Complex<T> {
        Complex::new(self.cabs().ln(), self.carg())
    }
    fn csqrt(self) -> Complex<T> {
        // Principal branch; the form avoids cancellation on both half-axes.
        let two = T::one() + T::one();
        let r = self.cabs();
        if r.is_zero() {
            return Complex::zero();
        }
        if self.re >= T::zero() {
            let t = ((r + self.re) / two).sqrt();
            Complex::new(t, self.im / (two * t))
        } else {
            let t = ((r - self.re) / two).sqrt();
            let im = if self.im < T::zero() { -t } else { t };
            Complex::new(self.im / (two * im), im)
        }
    }
    fn cabs(self) -> T {
        let a = self.re.abs();
        let b = self.im.abs();
        let (big, small) = if a > b { (a, b) } else { (b, a) };
        if big.is_zero() {
            return big;
        }
        let q = small / big;
        big * (T::one() + q * q).sqrt()
    }
    fn carg(self) -> T {
        self.im.atan2(self.re)
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
    fn from_c64(z: Complex64) -> Complex<T> {
        Complex::new(T::from_f64(z.re), T::from_f64(z.im))
    }
    fn scale(self, k: T) -> Complex<T> {
        Complex::new(self.re * k, self.im * k)
    }
}

/// Lift a double-precision complex value.
pub fn lift<T: Real>(z: Complex64) -> Complex<T> {
    <Complex<T> as CReal<T>>::from_c64(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ext_round_trip() {
        for v in [1.0, -3.25, 1e-300, 7.7e250, 0.1, std::f64::consts::PI] {
            assert_eq!(Ext::from_f64(v).to_f64(), v);
        }
    }

    #[test]
    fn ext_ratio_is_correctly_rounded() {
        let third = Ext::from_ratio(&BigInt::from(1), &BigInt::from(3));
        let err = (third * Ext::from_f64(3.0) - Ext::from_f64(1.0)).abs();
        assert!(err < Ext::from_f64(1e-70));
        let big = BigInt::from(10).pow(40);
        let x = Ext::from_ratio(&big, &BigInt::from(7));
        assert!((x.to_f64() - 1e40 / 7.0).abs() < 1e25);
    }

    #[test]
    fn complex_sqrt_is_principal() {
        let z = Complex::new(-4.0_f64, -1e-300).csqrt();
        assert!((z - Complex::new(0.0, -2.0)).norm() < 1e-15);
        let w = Complex::new(-1.0_f64, 1e-300).csqrt();
        assert!((w - Complex::new(0.0, 1.0)).norm() < 1e-15);
        let e = Complex::new(Ext::from_f64(3.0), Ext::from_f64(4.0)).csqrt();
        assert_eq!(e.to_c64(), Complex64::new(2.0, 1.0));
    }
}
