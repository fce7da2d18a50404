//! Truncated Taylor series about a complex base point.
//!
//! Coefficient `k` holds `f^(k)(base)/k!`. Every series carries its order
//! explicitly; binary operations truncate to the smaller order and refuse
//! operands expanded about different points.
//!
//! ```
//! use num_complex::Complex64;
//! use qpainleve::series::TruncatedSeries;
//!
//! let one = Complex64::new(1.0, 0.0);
//! let z = TruncatedSeries::<f64>::variable(Complex64::new(0.0, 0.0), 3);
//! let geo = TruncatedSeries::constant(z.base(), one, 3).try_div(&(-&z).add_scalar(one)).unwrap();
//! for c in geo.coeffs() {
//!     assert!((c - one).norm() < 1e-15);
//! }
//! ```

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::{Complex, Complex64};
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::precision::{lift, CReal, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries<T: Real = f64> {
    base: Complex64,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> TruncatedSeries<T> {
    /// Series with the given coefficients; `coeffs` must be non-empty.
    pub fn new(base: Complex64, coeffs: Vec<Complex<T>>) -> Self {
        assert!(!coeffs.is_empty(), "a truncated series has at least one coefficient");
        TruncatedSeries { base, coeffs }
    }

    pub fn zero(base: Complex64, order: usize) -> Self {
        Self::new(base, vec![Complex::zero(); order + 1])
    }

    pub fn constant(base: Complex64, c: Complex<T>, order: usize) -> Self {
        let mut s = Self::zero(base, order);
        s.coeffs[0] = c;
        s
    }

    /// The local variable `z = s - base`.
    pub fn variable(base: Complex64, order: usize) -> Self {
        let mut s = Self::zero(base, order);
        if order > 0 {
            s.coeffs[1] = Complex::one();
        }
        s
    }

    /// The coordinate `s = base + z`.
    pub fn coordinate(base: Complex64, order: usize) -> Self {
        let mut s = Self::variable(base, order);
        s.coeffs[0] = lift(base);
        s
    }

    pub fn base(&self) -> Complex64 {
        self.base
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Complex<T> {
        self.coeffs.get(k).copied().unwrap_or_else(Complex::zero)
    }

    pub fn into_coeffs(self) -> Vec<Complex<T>> {
        self.coeffs
    }

    pub fn truncate(&self, order: usize) -> Self {
        let n = order.min(self.order());
        Self::new(self.base, self.coeffs[..=n].to_vec())
    }

    /// Horner evaluation at `s`; exact at the base point.
    pub fn eval(&self, s: Complex<T>) -> Complex<T> {
        let z = s - lift(self.base);
        if z.is_zero() {
            return self.coeffs[0];
        }
        self.coeffs.iter().rev().fold(Complex::zero(), |acc, &c| acc * z + c)
    }

    pub fn eval_c64(&self, s: Complex64) -> Complex64 {
        self.eval(lift(s)).to_c64()
    }

    fn check_base(&self, other: &Self) -> Result<()> {
        if self.base != other.base {
            return Err(Error::BaseMismatch(self.base, other.base));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_base(other)?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_base(other)?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_base(other)?;
        let n = self.order().min(other.order());
        let mut out = vec![Complex::zero(); n + 1];
        for (i, &a) in self.coeffs[..=n].iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (k, &b) in other.coeffs[..=n - i].iter().enumerate() {
                out[i + k] = out[i + k] + a * b;
            }
        }
        Ok(Self::new(self.base, out))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self> {
        self.check_base(other)?;
        let b0 = other.coeffs[0];
        if b0.is_zero() {
            return Err(Error::ZeroConstantTerm);
        }
        let n = self.order().min(other.order());
        let mut q: Vec<Complex<T>> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut acc = self.coeffs[k];
            for j in 1..=k {
                acc = acc - other.coeffs[j] * q[k - j];
            }
            q.push(acc / b0);
        }
        Ok(Self::new(self.base, q))
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Self {
        let n = self.order().min(other.order());
        let c = (0..=n).map(|k| f(self.coeffs[k], other.coeffs[k])).collect();
        Self::new(self.base, c)
    }

    /// Adds `c` to the constant term only.
    pub fn add_scalar(&self, c: Complex<T>) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0] + c;
        out
    }

    pub fn mul_scalar(&self, c: Complex<T>) -> Self {
        Self::new(self.base, self.coeffs.iter().map(|&a| a * c).collect())
    }

    pub fn exp(&self) -> Self {
        let n = self.order();
        let a = &self.coeffs;
        let mut b = Vec::with_capacity(n + 1);
        b.push(a[0].cexp());
        for k in 1..=n {
            let mut acc = Complex::zero();
            for j in 1..=k {
                acc = acc + a[j].scale(T::from_i64(j as i64)) * b[k - j];
            }
            b.push(acc.scale(T::one() / T::from_i64(k as i64)));
        }
        Self::new(self.base, b)
    }

    /// Principal logarithm.
    pub fn ln(&self) -> Result<Self> {
        let n = self.order();
        let a = &self.coeffs;
        if a[0].is_zero() {
            return Err(Error::BranchPoint("log"));
        }
        let mut b: Vec<Complex<T>> = Vec::with_capacity(n + 1);
        b.push(a[0].cln());
        for k in 1..=n {
            let mut acc = Complex::zero();
            for j in 1..k {
                acc = acc + b[j].scale(T::from_i64(j as i64)) * a[k - j];
            }
            b.push((a[k] - acc.scale(T::one() / T::from_i64(k as i64))) / a[0]);
        }
        Ok(Self::new(self.base, b))
    }

    /// Principal power `a^alpha`.
    pub fn powc(&self, alpha: Complex<T>) -> Result<Self> {
        let n = self.order();
        let a = &self.coeffs;
        if a[0].is_zero() {
            return Err(Error::BranchPoint("pow"));
        }
        let mut b: Vec<Complex<T>> = Vec::with_capacity(n + 1);
        b.push((a[0].cln() * alpha).cexp());
        let one = Complex::<T>::one();
        for k in 1..=n {
            let mut acc: Complex<T> = Complex::zero();
            for j in 1..=k {
                let w = (alpha + one).scale(T::from_i64(j as i64)) - lift(Complex64::new(k as f64, 0.0));
                acc = acc + w * a[j] * b[k - j];
            }
            b.push(acc / (a[0].scale(T::from_i64(k as i64))));
        }
        Ok(Self::new(self.base, b))
    }

    /// Principal square root.
    pub fn sqrt(&self) -> Result<Self> {
        let n = self.order();
        let a = &self.coeffs;
        if a[0].is_zero() {
            return Err(Error::BranchPoint("sqrt"));
        }
        let mut b: Vec<Complex<T>> = Vec::with_capacity(n + 1);
        b.push(a[0].csqrt());
        let two_b0 = b[0] + b[0];
        for k in 1..=n {
            let mut acc = a[k];
            for j in 1..k {
                acc = acc - b[j] * b[k - j];
            }
            b.push(acc / two_b0);
        }
        Ok(Self::new(self.base, b))
    }

    /// Derivative; order drops by one (order 0 gives the zero series).
    pub fn differentiate(&self) -> Self {
        if self.order() == 0 {
            return Self::zero(self.base, 0);
        }
        let c = (1..=self.order()).map(|k| self.coeffs[k].scale(T::from_i64(k as i64))).collect();
        Self::new(self.base, c)
    }

    /// Antiderivative vanishing at the base point; order rises by one.
    pub fn integrate(&self) -> Self {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(Complex::zero());
        for (k, &a) in self.coeffs.iter().enumerate() {
            c.push(a.scale(T::one() / T::from_i64(k as i64 + 1)));
        }
        Self::new(self.base, c)
    }

    /// The series of `f^(k)/k!`, of order `order - k`.
    pub fn scaled_derivative(&self, k: usize) -> Self {
        if k > self.order() {
            return Self::zero(self.base, 0);
        }
        let c = (k..=self.order())
            .map(|i| self.coeffs[i].scale(binomial::<T>(i, k)))
            .collect();
        Self::new(self.base, c)
    }
}

pub(crate) fn binomial<T: Real>(n: usize, k: usize) -> T {
    let k = k.min(n - k);
    let mut acc = T::one();
    for i in 0..k {
        acc = acc * T::from_i64((n - i) as i64) / T::from_i64(i as i64 + 1);
    }
    acc
}

impl<T: Real> Neg for &TruncatedSeries<T> {
    type Output = TruncatedSeries<T>;
    fn neg(self) -> TruncatedSeries<T> {
        TruncatedSeries::new(self.base, self.coeffs.iter().map(|&a| -a).collect())
    }
}

// Operator forms panic on a base mismatch; fallible forms are the try_* methods.
macro_rules! series_op {
    ($tr:ident, $m:ident, $f:ident) => {
        impl<T: Real> $tr for &TruncatedSeries<T> {
            type Output = TruncatedSeries<T>;
            fn $m(self, rhs: &TruncatedSeries<T>) -> TruncatedSeries<T> {
                self.$f(rhs).expect("series operands share a base point")
            }
        }
    };
}
series_op!(Add, add, try_add);
series_op!(Sub, sub, try_sub);
series_op!(Mul, mul, try_mul);

/// Newton iteration on series for a root of `f` that continues `seed`.
///
/// `f` and `df` are the polynomial and its derivative in `W`, both acting
/// on series. The seed is first polished as a scalar root at `base`; it
/// must already be a root to about 1e-6.
pub fn newton_root<T, F, D>(f: F, df: D, seed: Complex<T>, base: Complex64, order: usize) -> Result<TruncatedSeries<T>>
where
    T: Real,
    F: Fn(&TruncatedSeries<T>) -> TruncatedSeries<T>,
    D: Fn(&TruncatedSeries<T>) -> TruncatedSeries<T>,
{
    let scalar = |w: Complex<T>, g: &dyn Fn(&TruncatedSeries<T>) -> TruncatedSeries<T>| {
        g(&TruncatedSeries::constant(base, w, 0)).coeffs[0]
    };
    let r0 = scalar(seed, &f).to_c64().norm();
    if !(r0 <= 1e-6 * (1.0 + seed.to_c64().norm())) {
        return Err(Error::NotARoot { seed: seed.to_c64(), residual: r0 });
    }
    let mut w = seed;
    let tiny = T::epsilon() * T::from_f64(4.0);
    for _ in 0..60 {
        let d = scalar(w, &df);
        if d.to_c64().norm() < 1e-10 {
            return Err(Error::SingularNewton(base));
        }
        let step = scalar(w, &f) / d;
        w = w - step;
        if step.cabs() <= tiny * (T::one() + w.cabs()) {
            break;
        }
    }
    if scalar(w, &df).to_c64().norm() < 1e-10 {
        return Err(Error::SingularNewton(base));
    }
    // Each pass doubles the number of correct coefficients.
    let mut s = TruncatedSeries::constant(base, w, order);
    let mut correct = 1usize;
    while correct <= order {
        let step = f(&s).try_div(&df(&s))?;
        s = s.try_sub(&step)?;
        correct *= 2;
    }
    let step = f(&s).try_div(&df(&s))?;
    s.try_sub(&step)
}
