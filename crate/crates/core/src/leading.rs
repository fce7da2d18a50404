//! Leading-order branches of `W0^4 = W0 - exp(-s)`.
//!
//! The four roots are labeled by their limits as `Re s -> +inf`:
//! branch 3 tends to 1, branches 1 and 2 to `exp(+-2i pi/3)`, branch 4 to
//! 0. A root at `s` is obtained by Newton continuation from the far right
//! along a horizontal line, detouring around cuts. Each cut runs from a
//! singular point horizontally to `Re s = -inf`; a point exactly on a cut
//! takes its value from the upper side.
//!
//! ```
//! use num_complex::Complex64;
//! use qpainleve::leading::{branch_value, BranchId};
//!
//! let w = branch_value(Complex64::new(20.0, 0.0), BranchId::new(3).unwrap()).unwrap();
//! assert!((w - 1.0).norm() < 1e-8);
//! ```

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::{lift, CReal, Real};
use crate::series::{newton_root, TruncatedSeries};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct BranchId(u8);

impl TryFrom<u8> for BranchId {
    type Error = Error;
    fn try_from(j: u8) -> Result<Self> {
        BranchId::new(j)
    }
}

impl From<BranchId> for u8 {
    fn from(j: BranchId) -> u8 {
        j.0
    }
}

impl BranchId {
    pub fn new(j: u8) -> Result<Self> {
        if (1..=4).contains(&j) {
            Ok(BranchId(j))
        } else {
            Err(Error::Invalid(format!("branch must be 1..=4, got {j}")))
        }
    }

    pub fn j(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn solution_type(self) -> SolutionType {
        if self.0 == 4 {
            SolutionType::TypeB
        } else {
            SolutionType::TypeA
        }
    }

    pub fn all() -> [BranchId; 4] {
        [BranchId(1), BranchId(2), BranchId(3), BranchId(4)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionType {
    TypeA,
    TypeB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularLabel {
    S01,
    S02,
    S03,
}

/// `s0 = (log(256/27) + 2 i k pi) / 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPoint {
    pub k: i64,
    pub location: Complex64,
}

impl SingularPoint {
    pub fn new(k: i64) -> Self {
        let re = (256.0_f64 / 27.0).ln() / 3.0;
        SingularPoint { k, location: Complex64::new(re, 2.0 * PI * k as f64 / 3.0) }
    }

    /// Label of the D0 point this one translates, by `k mod 3`.
    pub fn label(&self) -> SingularLabel {
        match self.k.rem_euclid(3) {
            0 => SingularLabel::S03,
            1 => SingularLabel::S02,
            _ => SingularLabel::S01,
        }
    }

    /// The Type A branch that coalesces with branch 4 here.
    pub fn type_a_branch(&self) -> BranchId {
        match self.label() {
            SingularLabel::S01 => BranchId(1),
            SingularLabel::S02 => BranchId(2),
            SingularLabel::S03 => BranchId(3),
        }
    }

    /// Whether the labeled branch `j` is singular here.
    pub fn is_singular_for(&self, j: BranchId) -> bool {
        j.0 == 4 || j == self.type_a_branch()
    }
}

pub fn singular_points(k_min: i64, k_max: i64) -> Result<Vec<SingularPoint>> {
    if k_min > k_max {
        return Err(Error::Invalid(format!("empty k range {k_min}..{k_max}")));
    }
    Ok((k_min..=k_max).map(SingularPoint::new).collect())
}

/// Singular point in D0 of the Type A branch `j`.
pub fn anchor_of(j: BranchId) -> Result<SingularPoint> {
    match j.0 {
        1 => Ok(SingularPoint::new(-1)),
        2 => Ok(SingularPoint::new(1)),
        3 => Ok(SingularPoint::new(0)),
        _ => Err(Error::Invalid("branch 4 is singular at all three points of D0".into())),
    }
}

/// The three singular points in D0.
pub fn d0_singular_points() -> [SingularPoint; 3] {
    [SingularPoint::new(-1), SingularPoint::new(1), SingularPoint::new(0)]
}

/// Nearest singular point, with its distance.
pub fn nearest_singular(s: Complex64) -> (SingularPoint, f64) {
    let k = (3.0 * s.im / (2.0 * PI)).round() as i64;
    let p = SingularPoint::new(k);
    (p, (s - p.location).norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalExpansion {
    pub a: Complex64,
    pub b: Complex64,
    pub center: SingularPoint,
}

impl LocalExpansion {
    /// `a + b sqrt(s - s0)`, principal root.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.a + self.b * (s - self.center.location).sqrt()
    }
}

pub fn local_expansion(j: BranchId) -> Result<LocalExpansion> {
    if j.0 == 4 {
        return Err(Error::Invalid(
            "Type B has no single local expansion; use per-singularity data with j in 1..=3".into(),
        ));
    }
    let rot = (I * (2.0 * PI * j.0 as f64 / 3.0)).exp();
    Ok(LocalExpansion {
        a: rot * 0.25_f64.cbrt(),
        b: rot * (1.0 / (8.0 * 2.0_f64.sqrt())).cbrt(),
        center: anchor_of(j)?,
    })
}

pub fn quartic_residual(w: Complex64, s: Complex64) -> Complex64 {
    w.powi(4) - w + (-s).exp()
}

/// Right edge of the continuation; at `Re s >= 8` the roots are within
/// 1e-3 of their limits.
const X_REF: f64 = 8.0;
/// Half-width of the band around a cut inside which paths detour.
const CUT_BAND: f64 = 0.25;
const H_MAX: f64 = 0.25;
/// Queries closer than this to a singular point are refused.
const COALESCE: f64 = 1e-10;

fn newton_polish(mut w: Complex64, s: Complex64) -> Option<Complex64> {
    let e = (-s).exp();
    for _ in 0..12 {
        let d = 4.0 * w.powi(3) - 1.0;
        let step = (w.powi(4) - w + e) / d;
        w -= step;
        if !w.is_finite() {
            return None;
        }
        if step.norm() <= 1e-15 * (1.0 + w.norm()) {
            return Some(w);
        }
    }
    let resid = quartic_residual(w, s).norm();
    (resid <= 1e-12 * (1.0 + w.norm().powi(4))).then_some(w)
}

fn min_separation(w: &[Complex64; 4]) -> f64 {
    let mut m = f64::INFINITY;
    for a in 0..4 {
        for b in a + 1..4 {
            m = m.min((w[a] - w[b]).norm());
        }
    }
    m
}

/// Carry the four labeled roots along the straight segment `from -> to`.
fn track(mut w: [Complex64; 4], from: Complex64, to: Complex64) -> Result<[Complex64; 4]> {
    let total = (to - from).norm();
    if total == 0.0 {
        return Ok(w);
    }
    let dir = (to - from) / total;
    let mut t = 0.0;
    let mut h = H_MAX;
    while t < total {
        let step = h.min(total - t);
        let s_old = from + dir * t;
        let s_new = from + dir * (t + step);
        let e = (-s_old).exp();
        let sep = min_separation(&w);
        let mut next = w;
        let mut ok = true;
        for i in 0..4 {
            let pred = w[i] + dir * step * e / (4.0 * w[i].powi(3) - 1.0);
            match newton_polish(pred, s_new) {
                Some(v) if (v - pred).norm() < 0.1 * sep && (v - w[i]).norm() < 0.5 * sep => next[i] = v,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && min_separation(&next) > 1e-3 * sep {
            w = next;
            t += step;
            h = (h * 1.5).min(H_MAX);
        } else {
            h *= 0.5;
            if h < 1e-12 {
                return Err(Error::ContinuationFailed(s_new));
            }
        }
    }
    Ok(w)
}

fn start_roots(s: Complex64) -> Result<[Complex64; 4]> {
    let guesses = [(I * (2.0 * PI / 3.0)).exp(), (I * (-2.0 * PI / 3.0)).exp(), Complex64::new(1.0, 0.0), (-s).exp()];
    let mut w = [Complex64::new(0.0, 0.0); 4];
    for (i, g) in guesses.iter().enumerate() {
        w[i] = newton_polish(*g, s).ok_or(Error::ContinuationFailed(s))?;
    }
    Ok(w)
}

/// All four labeled roots at `s`, indexed by branch minus one.
pub fn labeled_roots(s: Complex64) -> Result<[Complex64; 4]> {
    if !s.is_finite() {
        return Err(Error::Invalid(format!("non-finite point {s}")));
    }
    let (p, dist) = nearest_singular(s);
    if dist < COALESCE {
        return Err(Error::CoalescingBranches(p.location));
    }
    let x0 = s.re.max(X_REF);
    let start = Complex64::new(x0, s.im);
    let w = start_roots(start)?;
    let s0 = p.location;
    let near_cut = s.re < s0.re && (s.im - s0.im).abs() < CUT_BAND;
    if !near_cut {
        return track(w, start, s);
    }
    let side = if s.im >= s0.im { 1.0 } else { -1.0 };
    let y = s0.im + side * CUT_BAND;
    let a = Complex64::new(x0, y);
    let b = Complex64::new(s.re, y);
    let w = track(w, start, a)?;
    let w = track(w, a, b)?;
    track(w, b, s)
}

pub fn branch_value(s: Complex64, j: BranchId) -> Result<Complex64> {
    Ok(labeled_roots(s)?[j.index()])
}

/// Branch value polished to the precision of `T`.
pub fn branch_value_in<T: Real>(s: Complex64, j: BranchId) -> Result<Complex<T>> {
    let seed = branch_value(s, j)?;
    let e = (-lift::<T>(s)).cexp();
    let one = Complex::<T>::new(T::one(), T::zero());
    let four = lift::<T>(Complex64::new(4.0, 0.0));
    let mut w = lift::<T>(seed);
    for _ in 0..8 {
        let w3 = w * w * w;
        let step = (w3 * w - w + e) / (four * w3 - one);
        w = w - step;
        if step.cabs() <= T::epsilon() * T::from_f64(4.0) {
            break;
        }
    }
    Ok(w)
}

/// Taylor series of the labeled branch about `s_c`.
pub fn branch_series<T: Real>(s_c: Complex64, j: BranchId, order: usize) -> Result<TruncatedSeries<T>> {
    let (p, dist) = nearest_singular(s_c);
    if dist < 0.05 {
        return Err(Error::TooCloseToSingularity { point: s_c, singular: p.location, dist });
    }
    let seed = branch_value_in::<T>(s_c, j)?;
    let f = |w: &TruncatedSeries<T>| {
        let e = TruncatedSeries::coordinate(w.base(), w.order()).mul_scalar(lift(Complex64::new(-1.0, 0.0))).exp();
        let w2 = w * w;
        &(&(&w2 * &w2) - w) + &e
    };
    let df = |w: &TruncatedSeries<T>| (&(w * w) * w).mul_scalar(lift(Complex64::new(4.0, 0.0))).add_scalar(lift(Complex64::new(-1.0, 0.0)));
    newton_root(f, df, seed, s_c, order)
}

/// The closed-form radical solutions with every root taken principal.
///
/// Agrees with the labeled branches for large `Re s` on the real axis; used
/// as an unordered root set elsewhere.
pub fn closed_form_principal(s: Complex64) -> [Complex64; 4] {
    let a = 4.0 * (2.0_f64 / 3.0).cbrt() * (-s).exp();
    let b = 9.0 + 3.0_f64.sqrt() * (27.0 - 256.0 * (-3.0 * s).exp()).sqrt();
    let c = 2.0_f64.cbrt() * 3.0_f64.powf(2.0 / 3.0);
    let b3 = b.powf(1.0 / 3.0);
    let d = a / b3 + b3 / c;
    let sd = d.sqrt();
    let p = (d + 2.0 / sd).sqrt();
    let m = (-d + 2.0 / sd).sqrt();
    [-sd / 2.0 + I * p / 2.0, -sd / 2.0 - I * p / 2.0, sd / 2.0 + m / 2.0, sd / 2.0 - m / 2.0]
}

/// `(j_target, lambda, shift)` with `lambda * W3(s + shift) = W_j(s)`.
pub fn symmetry_image(s: Complex64, j_source: BranchId) -> Result<(BranchId, Complex64, Complex64)> {
    let _ = s;
    if j_source.0 == 4 {
        return Err(Error::Invalid("branch 4 is not a rotation of branch 3".into()));
    }
    let table = lambda_pairing()?;
    let (lam, shift) = table[j_source.index()];
    Ok((j_source, lam, shift))
}

fn lambda_pairing() -> Result<[(Complex64, Complex64); 3]> {
    static CELL: OnceLock<std::result::Result<[(Complex64, Complex64); 3], Error>> = OnceLock::new();
    CELL.get_or_init(|| {
        let probe = Complex64::new(3.0, 0.3);
        let mut out = [(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)); 3];
        for j in 1..=2u8 {
            let target = branch_value(probe, BranchId(j))?;
            let mut found = None;
            for sign in [1.0, -1.0] {
                let shift = I * (sign * 2.0 * PI / 3.0);
                let lam = shift.exp();
                let w3 = branch_value(probe + shift, BranchId(3))?;
                if (lam * w3 - target).norm() < 1e-8 {
                    found = Some((lam, shift));
                }
            }
            out[j as usize - 1] = found.ok_or_else(|| Error::NoConvergence("branch-labeling inconsistency in symmetry pairing".into()))?;
        }
        Ok(out)
    })
    .clone()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FarField {
    Nonzero(Complex64),
    Vanishing,
}

pub fn far_field_class(j: BranchId) -> FarField {
    match j.0 {
        1 => FarField::Nonzero((I * (2.0 * PI / 3.0)).exp()),
        2 => FarField::Nonzero((I * (-2.0 * PI / 3.0)).exp()),
        3 => FarField::Nonzero(Complex64::new(1.0, 0.0)),
        _ => FarField::Vanishing,
    }
}
