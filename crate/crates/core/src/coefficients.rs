//! Coefficients `W_r(s)` of the expansion `W ~ sum eps^r W_r(s)`.
//!
//! The rescaled equation `W(s+eps) W(s)^2 W(s-eps) = W(s) - (1+eps)^(-s/eps)`
//! is split into grades in `eps`. Shifts are Taylor expansions, so grade
//! `g` of `W(s+eps)` is `A_g = sum_k W_(g-k)^(k)/k!`, and likewise `B_g`
//! with alternating signs for `W(s-eps)`. The unknown `W_r` enters grade
//! `r` only through `4 W0^3 W_r`, which leaves one linear solve per order.
//!
//! Entry `r` is exact through order `N - r` when `W0` is expanded to order
//! `N`; the table keeps the common order `N - R`.

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::leading::{branch_series, branch_value, nearest_singular, BranchId};
use crate::precision::{lift, CReal, Real};
use crate::richardson::richardson_tail;
use crate::series::TruncatedSeries;

/// Signed Stirling numbers of the first kind, `s1(n, k)` for `k <= n <= n_max`.
#[derive(Debug, Clone)]
pub struct StirlingTable {
    rows: Vec<Vec<BigInt>>,
}

impl StirlingTable {
    pub fn new(n_max: usize) -> Self {
        let mut rows: Vec<Vec<BigInt>> = vec![vec![BigInt::one()]];
        for n in 0..n_max {
            let prev = &rows[n];
            let mut next = vec![BigInt::zero(); n + 2];
            for k in 1..=n + 1 {
                let left = &prev[k - 1];
                let right = if k <= n { &prev[k] * BigInt::from(n) } else { BigInt::zero() };
                next[k] = left - right;
            }
            rows.push(next);
        }
        StirlingTable { rows }
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, n: usize, k: usize) -> Result<&BigInt> {
        if k > n || n > self.n_max() {
            return Err(Error::Invalid(format!("s1({n}, {k}) outside the table (n_max {})", self.n_max())));
        }
        Ok(&self.rows[n][k])
    }
}

pub fn stirling_first(n: usize, k: usize) -> Result<BigInt> {
    StirlingTable::new(n).get(n, k).cloned()
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn binomial_big(n: usize, k: usize) -> BigInt {
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Exact coefficients of `P_n(s)` in `(1+eps)^(s/eps) = e^s sum eps^n P_n(s)`.
pub fn q_expansion_polynomial(n: usize) -> Vec<BigRational> {
    q_expansion_with(&StirlingTable::new(2 * n), n)
}

fn q_expansion_with(table: &StirlingTable, n: usize) -> Vec<BigRational> {
    // 1/((r-k)!(k+n)!) = C(r+n, r-k)/(r+n)!
    (0..=n)
        .map(|r| {
            let mut num = BigInt::zero();
            for k in 0..=r {
                let term = &table.rows[k + n][k] * binomial_big(r + n, r - k);
                if (r - k).is_even() {
                    num += term;
                } else {
                    num -= term;
                }
            }
            BigRational::new(num, factorial(r + n))
        })
        .collect()
}

fn ratio_to<T: Real>(q: &BigRational) -> T {
    T::from_ratio(q.numer(), q.denom())
}

/// `P_n(s)` evaluated numerically.
pub fn eval_p(poly: &[BigRational], s: Complex64) -> Complex64 {
    poly.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + ratio_to::<f64>(c))
}

/// Taylor series of `e^(-s) P_r(-s)` about `base`.
pub fn forcing_term<T: Real>(r: usize, base: Complex64, order: usize) -> TruncatedSeries<T> {
    forcing_from(&q_expansion_polynomial(r), base, order)
}

fn forcing_from<T: Real>(poly: &[BigRational], base: Complex64, order: usize) -> TruncatedSeries<T> {
    let minus_s = TruncatedSeries::<T>::coordinate(base, order).mul_scalar(lift(Complex64::new(-1.0, 0.0)));
    let mut p = TruncatedSeries::zero(base, order);
    for (k, c) in poly.iter().enumerate().rev() {
        let coef = Complex::new(ratio_to::<T>(c), T::zero());
        p = if k + 1 == poly.len() { TruncatedSeries::constant(base, coef, order) } else { (&p * &minus_s).add_scalar(coef) };
    }
    &p * &minus_s.exp()
}

#[derive(Debug, Clone)]
pub struct CoefficientTable<T: Real = f64> {
    pub base: Complex64,
    pub branch: BranchId,
    /// `W_0 .. W_R`, all of order `order`.
    pub entries: Vec<TruncatedSeries<T>>,
    pub order: usize,
}

/// Smallest retained order a table may end with.
pub const MIN_RETAINED: usize = 4;

impl<T: Real> CoefficientTable<T> {
    pub fn r_max(&self) -> usize {
        self.entries.len() - 1
    }

    /// `W_r(s)` in the table's precision.
    pub fn value(&self, r: usize, s: Complex64) -> Complex<T> {
        self.entries[r].eval(lift(s))
    }

    pub fn values_c64(&self, s: Complex64) -> Vec<Complex64> {
        self.entries.iter().map(|e| e.eval(lift(s)).to_c64()).collect()
    }

    pub fn to_json(&self) -> String {
        let dto = TableJson {
            base_point: [self.base.re, self.base.im],
            branch: self.branch.j(),
            order: self.order,
            entries: self
                .entries
                .iter()
                .map(|e| e.coeffs().iter().map(|c| {
                    let z = c.to_c64();
                    [z.re, z.im]
                }).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&dto).expect("table serializes")
    }
}

impl CoefficientTable<f64> {
    pub fn from_json(text: &str) -> Result<Self> {
        let dto: TableJson = serde_json::from_str(text).map_err(|e| Error::Invalid(e.to_string()))?;
        let base = Complex64::new(dto.base_point[0], dto.base_point[1]);
        let entries: Vec<TruncatedSeries<f64>> = dto
            .entries
            .iter()
            .map(|e| TruncatedSeries::new(base, e.iter().map(|p| Complex64::new(p[0], p[1])).collect()))
            .collect();
        if entries.is_empty() || entries.iter().any(|e| e.order() != dto.order) {
            return Err(Error::Invalid("entries must share the table order".into()));
        }
        Ok(CoefficientTable { base, branch: BranchId::new(dto.branch)?, entries, order: dto.order })
    }
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    base_point: [f64; 2],
    branch: u8,
    order: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

/// Solve the recurrence for `W_0 .. W_R` about `base`.
///
/// `order` is the working order of `W_0`; it must be at least
/// `R + MIN_RETAINED`.
pub fn compute_coefficients<T: Real>(base: Complex64, j: BranchId, r_max: usize, order: usize) -> Result<CoefficientTable<T>> {
    let (p, dist) = nearest_singular(base);
    if dist < 0.1 {
        return Err(Error::TooCloseToSingularity { point: base, singular: p.location, dist });
    }
    if order < r_max + MIN_RETAINED {
        return Err(Error::OrderBudget(format!("order {order} cannot carry R = {r_max} (need >= R + {MIN_RETAINED})")));
    }
    let w0 = branch_series::<T>(base, j, order)?;
    let four = lift::<T>(Complex64::new(4.0, 0.0));
    let w0sq = &w0 * &w0;
    let denom = (&w0sq * &w0).mul_scalar(four).add_scalar(lift(Complex64::new(-1.0, 0.0)));
    if denom.coeff(0).to_c64().norm() < 1e-6 {
        return Err(Error::SingularNewton(base));
    }
    let stirling = StirlingTable::new(2 * r_max.max(1));

    let mut w: Vec<TruncatedSeries<T>> = vec![w0.clone()];
    // Grade pieces of W(s+eps), W(s-eps), W(s)^2 and W(s+eps) W(s)^2.
    let mut a = vec![w0.clone()];
    let mut b = vec![w0.clone()];
    let mut c = vec![w0sq.clone()];
    let mut pp = vec![&w0 * &w0sq];
    let two = lift::<T>(Complex64::new(2.0, 0.0));
    let three = lift::<T>(Complex64::new(3.0, 0.0));

    for r in 1..=r_max {
        let ord = order - r;
        let tr = |s: &TruncatedSeries<T>| s.truncate(ord);
        let mut ar = TruncatedSeries::zero(base, ord);
        let mut br = TruncatedSeries::zero(base, ord);
        for k in 1..=r {
            let d = w[r - k].scaled_derivative(k).truncate(ord);
            ar = &ar + &d;
            br = if k % 2 == 0 { &br + &d } else { &br - &d };
        }
        let mut cr = TruncatedSeries::zero(base, ord);
        for i in 1..r {
            cr = &cr + &(&tr(&w[i]) * &tr(&w[r - i]));
        }
        let mut pr = &tr(&a[0]) * &cr;
        for i in 1..=r {
            let ci = tr(&c[r - i]);
            let ai = if i == r { ar.clone() } else { tr(&a[i]) };
            pr = &pr + &(&ai * &ci);
        }
        let mut rest = &pr * &tr(&b[0]);
        for i in 1..=r {
            let bi = if i == r { br.clone() } else { tr(&b[i]) };
            rest = &rest + &(&tr(&pp[r - i]) * &bi);
        }
        let forcing = forcing_from::<T>(&q_expansion_with(&stirling, r), base, ord);
        let wr = (&rest + &forcing).mul_scalar(lift(Complex64::new(-1.0, 0.0))).try_div(&tr(&denom))?;

        let w0r = tr(&w0);
        ar = &ar + &wr;
        br = &br + &wr;
        cr = &cr + &(&w0r * &wr).mul_scalar(two);
        pr = &pr + &(&(&w0r * &w0r) * &wr).mul_scalar(three);
        w.push(wr);
        a.push(ar);
        b.push(br);
        c.push(cr);
        pp.push(pr);
    }
    let keep = order - r_max;
    let entries = w.iter().map(|e| e.truncate(keep)).collect();
    Ok(CoefficientTable { base, branch: j, entries, order: keep })
}

/// `W_1(s) = s e^(-s) / (2 (1 - 4 W_0^3))`.
pub fn first_correction(s: Complex64, j: BranchId) -> Result<Complex64> {
    let w = branch_value(s, j)?;
    let d = 1.0 - 4.0 * w.powi(3);
    if d.norm() < 1e-12 {
        return Err(Error::SingularNewton(s));
    }
    Ok(s * (-s).exp() / (2.0 * d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LateOrderFit {
    pub chi_squared: Complex64,
    pub chi_estimate: Complex64,
    pub gamma_estimate: f64,
    pub prefactor_estimate: Complex64,
    /// Even indices `2m` that entered the fit.
    pub r_used: std::ops::RangeInclusive<usize>,
}

/// Fit `W_2m ~ K Gamma(2m+gamma)/chi^(2m+gamma)` to the even coefficients at `s`.
///
/// `chi` is fixed only up to sign by the data; the root with positive real
/// part is reported, and on the imaginary axis the one with negative
/// imaginary part, which is the singulant's convention there.
pub fn fit_late_order<T: Real>(table: &CoefficientTable<T>, s: Complex64) -> Result<LateOrderFit> {
    const M0: usize = 2;
    let vals = table.values_c64(s);
    let m_max = table.r_max() / 2;
    if m_max < M0 + 7 {
        return Err(Error::InsufficientTerms(table.r_max()));
    }
    let even: Vec<Complex64> = (0..=m_max).map(|m| vals[2 * m]).collect();
    let ms: Vec<usize> = (M0..m_max).collect();
    let rho: Vec<Complex64> = ms.iter().map(|&m| even[m + 1] / even[m]).collect();
    if rho.iter().any(|r| !r.is_finite()) {
        return Err(Error::NoConvergence("vanishing coefficient in ratio sequence".into()));
    }
    let k = 3;
    let inv: Vec<Complex64> = ms.iter().zip(&rho).map(|(&m, r)| r / ((2 * m) as f64 * (2 * m + 1) as f64)).collect();
    let (inv_chi2, err) = richardson_tail(&inv, M0, k).ok_or(Error::InsufficientTerms(table.r_max()))?;
    if !(err < 0.05 * inv_chi2.norm()) {
        return Err(Error::NoConvergence(format!("ratio limit unsettled (spread {err:.3e})")));
    }
    let chi2 = 1.0 / inv_chi2;
    let gam: Vec<Complex64> = ms
        .iter()
        .zip(&rho)
        .map(|(&m, r)| (r * chi2 - (2 * m) as f64 * (2 * m + 1) as f64) / (4 * m + 1) as f64)
        .collect();
    // b_m = gamma + gamma^2/(4m+1) + O(1/m): extrapolate, then remove the known term.
    let (g_lim, _) = richardson_tail(&gam, M0, k).ok_or(Error::InsufficientTerms(table.r_max()))?;
    let gamma = g_lim.re;

    let mut chi = chi2.sqrt();
    if chi.re.abs() < 1e-6 * chi.norm() {
        chi = Complex64::new(0.0, -chi.im.abs());
    } else if chi.re < 0.0 {
        chi = -chi;
    }
    let lnchi = chi.ln();
    let pref: Vec<Complex64> = (M0..=m_max)
        .map(|m| {
            let x = 2.0 * m as f64 + gamma;
            even[m] * (lnchi * x - ln_gamma(x)).exp()
        })
        .collect();
    let (prefactor, _) = richardson_tail(&pref, M0, k).ok_or(Error::InsufficientTerms(table.r_max()))?;
    Ok(LateOrderFit {
        chi_squared: chi2,
        chi_estimate: chi,
        gamma_estimate: gamma,
        prefactor_estimate: prefactor,
        r_used: 2 * M0..=2 * m_max,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::Ext;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn stirling_small_values() {
        assert_eq!(stirling_first(0, 0).unwrap(), BigInt::from(1));
        assert_eq!(stirling_first(2, 1).unwrap(), BigInt::from(-1));
        assert_eq!(stirling_first(3, 2).unwrap(), BigInt::from(-3));
        assert_eq!(stirling_first(5, 0).unwrap(), BigInt::from(0));
        assert!(stirling_first(2, 3).is_err());
    }

    #[test]
    fn low_forcing_polynomials() {
        let p0 = q_expansion_polynomial(0);
        assert_eq!(p0, vec![BigRational::one()]);
        let p1 = q_expansion_polynomial(1);
        assert_eq!(p1[0], BigRational::zero());
        assert_eq!(p1[1], BigRational::new((-1).into(), 2.into()));
        let p2 = q_expansion_polynomial(2);
        assert_eq!(p2[1], BigRational::new(1.into(), 3.into()));
        assert_eq!(p2[2], BigRational::new(1.into(), 8.into()));
    }

    #[test]
    fn forcing_examples() {
        let f1 = forcing_term::<f64>(1, c(0.0, 0.0), 3);
        assert!(f1.coeff(0).norm() < 1e-16);
        let f1 = forcing_term::<f64>(1, c(2.0, 0.0), 3);
        assert!((f1.coeff(0) - (-2.0f64).exp()).norm() < 1e-15);
        let f0 = forcing_term::<f64>(0, c(0.5, 0.0), 4);
        assert!((f0.coeff(2) - (-0.5f64).exp() / 2.0).norm() < 1e-15);
    }

    #[test]
    fn first_entries_match_closed_forms() {
        let base = c(2.0, 0.0);
        let t = compute_coefficients::<f64>(base, BranchId::new(3).unwrap(), 6, 24).unwrap();
        let w0 = branch_series::<f64>(base, BranchId::new(3).unwrap(), 24).unwrap();
        for k in 0..=t.order {
            assert!((t.entries[0].coeff(k) - w0.coeff(k)).norm() < 1e-14);
        }
        for s in [c(2.0, 0.0), c(2.1, 0.05)] {
            let w1 = first_correction(s, BranchId::new(3).unwrap()).unwrap();
            assert!((t.value(1, s) - w1).norm() < 1e-10 * w1.norm());
        }
        assert!((t.entries[1].coeff(0) + 0.0556888).norm() < 1e-6);
    }

    #[test]
    fn extended_agrees_with_double() {
        let base = c(2.0, 0.0);
        let d = compute_coefficients::<f64>(base, BranchId::new(3).unwrap(), 10, 30).unwrap();
        let e = compute_coefficients::<Ext>(base, BranchId::new(3).unwrap(), 10, 30).unwrap();
        for r in 0..=10 {
            let a = d.entries[r].coeff(0);
            let b = e.entries[r].coeff(0).to_c64();
            assert!((a - b).norm() < 1e-11 * a.norm().max(1.0), "{r}");
        }
    }

    #[test]
    fn refuses_bad_inputs() {
        assert!(compute_coefficients::<f64>(c(0.8, 0.0), BranchId::new(3).unwrap(), 4, 20).is_err());
        assert!(matches!(compute_coefficients::<f64>(c(2.0, 0.0), BranchId::new(3).unwrap(), 10, 12), Err(Error::OrderBudget(_))));
    }

    #[test]
    fn json_round_trip() {
        let t = compute_coefficients::<f64>(c(2.0, 0.0), BranchId::new(3).unwrap(), 3, 8).unwrap();
        let back = CoefficientTable::from_json(&t.to_json()).unwrap();
        assert_eq!(back.entries, t.entries);
        assert_eq!(back.branch, t.branch);
    }
}
