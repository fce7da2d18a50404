//! Stokes and anti-Stokes geometry, the smoothed Stokes multiplier and the
//! optimally truncated approximations.
//!
//! A Stokes curve of a singulant is a level set `Im chi = 0`, an anti-Stokes
//! curve a level set `Re chi = 0`. Curves are traced from the anchor by
//! prescribing `chi` along the curve, `chi = chi_seed + u tau` with `u` a unit
//! on the appropriate axis, and solving for `s` with Newton corrections.

use std::f64::consts::PI;

use num_complex::{Complex, Complex64};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientTable;
use crate::error::{Error, Result};
use crate::leading::{anchor_of, d0_singular_points, BranchId, SingularPoint, SolutionType};
use crate::precision::{lift, CReal, Real};
use crate::singulant::{lambda_for, local_scale, prefactor_from, singulant, Sign, SingulantValue, Tracker};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    Stokes,
    AntiStokes,
    BranchCut,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Stokes => "stokes",
            CurveKind::AntiStokes => "anti-stokes",
            CurveKind::BranchCut => "cut",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Reached `|Im s| = pi`, the edge of the fundamental strip.
    Boundary,
    /// The next step would cross the cut of the singular point at `k`.
    BranchCut(i64),
    NearSingularity(i64),
    Arclength,
    TurningPoint(Complex64),
    StepFailure(Complex64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedCurve {
    pub kind: CurveKind,
    pub anchor_k: i64,
    pub branch: u8,
    pub s_points: Vec<Complex64>,
    pub x_points: Vec<Complex64>,
    /// Singulant at each point; empty for cuts.
    pub chi: Vec<Complex64>,
    /// Anchor of the exponential switched on across this curve, if any.
    pub switched: Option<i64>,
    pub termination: Termination,
}

impl TracedCurve {
    pub fn remap(&mut self, mode: MapMode) {
        self.x_points = self.s_points.iter().map(|s| map_to_x(*s, mode)).collect();
    }
}

/// `chi ~ coef (s - s0)^(5/4)` near the anchor.
fn local_coefficient(j: BranchId) -> Complex64 {
    let kappa = match j.solution_type() {
        SolutionType::TypeA => -I,
        SolutionType::TypeB => Complex64::new(1.0, 0.0),
    };
    kappa * (0.8 * local_scale())
}

/// Launch angles on the principal sheet `(-pi, pi]`, ascending.
///
/// Solves `(5/4) theta + arg(coef) = 0 (mod pi)` for Stokes and `= pi/2`
/// for anti-Stokes curves.
pub fn initial_directions(anchor: SingularPoint, j: BranchId, kind: CurveKind) -> Result<Vec<f64>> {
    if !anchor.is_singular_for(j) {
        return Err(Error::Invalid(format!("branch {} is regular at {}", j.j(), anchor.location)));
    }
    let target = match kind {
        CurveKind::Stokes => 0.0,
        CurveKind::AntiStokes => PI / 2.0,
        CurveKind::BranchCut => return Ok(vec![PI]),
    };
    let phi = local_coefficient(j).arg();
    let mut out = Vec::new();
    for n in -3..=3 {
        let th = 0.8 * (target - phi + n as f64 * PI);
        if th > -PI + 1e-12 && th <= PI + 1e-12 {
            out.push(th);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MapMode {
    /// `x = e^s`.
    Leading,
    /// `x = (1 + eps)^(s / eps)`.
    Exact(Complex64),
}

pub fn map_to_x(s: Complex64, mode: MapMode) -> Complex64 {
    match mode {
        MapMode::Leading => s.exp(),
        MapMode::Exact(eps) => (s / eps * (1.0 + eps).ln()).exp(),
    }
}

/// Horizontal cut from `anchor` to `Re s = re_min`.
pub fn branch_cut(anchor: SingularPoint, j: BranchId, re_min: f64) -> TracedCurve {
    let p = anchor.location;
    let n = 64;
    let s_points: Vec<Complex64> =
        (0..=n).map(|i| Complex64::new(p.re + (re_min - p.re) * i as f64 / n as f64, p.im)).collect();
    TracedCurve {
        kind: CurveKind::BranchCut,
        anchor_k: anchor.k,
        branch: j.j(),
        x_points: s_points.iter().map(|s| map_to_x(*s, MapMode::Leading)).collect(),
        s_points,
        chi: Vec::new(),
        switched: None,
        termination: Termination::Arclength,
    }
}

fn crosses_cut(a: Complex64, b: Complex64, q: Complex64) -> bool {
    let side = |z: Complex64| z.im >= q.im;
    if side(a) == side(b) || a.im == b.im {
        return false;
    }
    let x = a.re + (b.re - a.re) * (q.im - a.im) / (b.im - a.im);
    x < q.re
}

fn nearby_singular(s: Complex64) -> impl Iterator<Item = SingularPoint> {
    let k0 = (3.0 * s.im / (2.0 * PI)).round() as i64;
    (k0 - 2..=k0 + 2).map(SingularPoint::new)
}

/// Solve `chi(s) = target` by Newton from `guess`, integrating from `base`.
fn correct(base: &Tracker, guess: Complex64, target: Complex64) -> Option<(Tracker, usize)> {
    let mut s = guess;
    let tol = 1e-12 * target.norm().max(1.0);
    for it in 0..8 {
        let mut trial = base.clone();
        trial.advance_to(s).ok()?;
        let err = trial.chi() - target;
        if err.norm() < tol {
            return Some((trial, it));
        }
        let d = trial.derivative();
        if d.norm() < 1e-14 {
            return None;
        }
        s -= err / d;
        if !s.is_finite() {
            return None;
        }
    }
    None
}

const SEED_RADIUS: f64 = 1e-3;
const MAX_STEP: f64 = 0.05;

/// Follow a Stokes or anti-Stokes curve out of `anchor`.
pub fn trace_curve(
    anchor: SingularPoint,
    j: BranchId,
    kind: CurveKind,
    direction: f64,
    max_arclength: f64,
) -> Result<TracedCurve> {
    let dirs = initial_directions(anchor, j, kind)?;
    if kind == CurveKind::BranchCut {
        return Ok(branch_cut(anchor, j, anchor.location.re - max_arclength));
    }
    if !dirs.iter().any(|d| (d - direction).abs() < 1e-6) {
        return Err(Error::Invalid(format!("{direction} is not a launch direction; expected one of {dirs:?}")));
    }
    let p = anchor.location;
    let delta = Complex64::from_polar(SEED_RADIUS, direction);
    let chi_local = local_coefficient(j) * (1.25 * delta.ln()).exp();
    let u = match kind {
        CurveKind::Stokes => Complex64::new(chi_local.re.signum(), 0.0),
        _ => Complex64::new(0.0, chi_local.im.signum()),
    };
    let start = Tracker::start(anchor, j)?;
    let (mut tr, _) = correct(&start, p + delta, u * chi_local.norm())
        .ok_or(Error::NoConvergence("curve seed did not converge".into()))?;
    let mut s_points = vec![p, tr.point()];
    let mut chi = vec![Complex64::zero(), tr.chi()];
    let mut arclength = (tr.point() - p).norm();
    let mut h = SEED_RADIUS;
    let termination = loop {
        if arclength >= max_arclength {
            break Termination::Arclength;
        }
        let d = tr.derivative();
        if d.norm() < 1e-10 {
            break Termination::TurningPoint(tr.point());
        }
        let target = tr.chi() + u * (d.norm() * h);
        let guess = tr.point() + u * (d.norm() * h) / d;
        match correct(&tr, guess, target) {
            Some((next, it)) => {
                let (a, b) = (tr.point(), next.point());
                if let Some(q) = nearby_singular(b).find(|q| q.is_singular_for(j) && crosses_cut(a, b, q.location)) {
                    break Termination::BranchCut(q.k);
                }
                arclength += (b - a).norm();
                tr = next;
                s_points.push(b);
                chi.push(tr.chi());
                if b.im.abs() >= PI {
                    break Termination::Boundary;
                }
                if let Some(q) = nearby_singular(b).find(|q| q.k != anchor.k && (b - q.location).norm() < 0.05) {
                    break Termination::NearSingularity(q.k);
                }
                if it <= 2 {
                    h = (2.0 * h).min(MAX_STEP);
                }
            }
            None => {
                h *= 0.5;
                if h < 1e-9 {
                    break Termination::StepFailure(tr.point());
                }
            }
        }
    };
    let switched = (kind == CurveKind::Stokes && u.re > 0.0).then_some(anchor.k);
    Ok(TracedCurve {
        kind,
        anchor_k: anchor.k,
        branch: j.j(),
        x_points: s_points.iter().map(|s| map_to_x(*s, MapMode::Leading)).collect(),
        s_points,
        chi,
        switched,
        termination,
    })
}

/// All Stokes and anti-Stokes curves of `anchor`, plus its cut.
pub fn stokes_structure(anchor: SingularPoint, j: BranchId, max_arclength: f64) -> Result<Vec<TracedCurve>> {
    let mut out = Vec::new();
    for kind in [CurveKind::Stokes, CurveKind::AntiStokes] {
        for th in initial_directions(anchor, j, kind)? {
            out.push(trace_curve(anchor, j, kind, th, max_arclength)?);
        }
    }
    out.push(branch_cut(anchor, j, anchor.location.re - max_arclength));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    TypeA(BranchId),
    TypeB,
}

impl Family {
    pub fn branch(self) -> BranchId {
        match self {
            Family::TypeA(j) => j,
            Family::TypeB => BranchId::new(4).expect("4 is a branch"),
        }
    }

    /// Anchors of the singulants: one for Type A; for Type B the points
    /// of `eta_1, eta_2, eta_3` in that order.
    pub fn anchors(self) -> Result<Vec<SingularPoint>> {
        match self {
            Family::TypeA(j) => Ok(vec![anchor_of(j)?]),
            Family::TypeB => {
                let [a1, a2, a3] = d0_singular_points();
                Ok(vec![a1, a2, a3])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeBRegion {
    I,
    II,
    III,
    IV,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignPair {
    pub anchor_k: i64,
    pub value: Complex64,
    pub re_positive: bool,
    pub im_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub signs: Vec<SignPair>,
    pub type_b_region: Option<TypeBRegion>,
}

/// Distance below which a point counts as lying on a curve or cut.
const ON_CURVE: f64 = 1e-4;

pub fn classify_point(s: Complex64, family: Family) -> Result<RegionDescriptor> {
    let j = family.branch();
    for q in nearby_singular(s) {
        if q.is_singular_for(j) && s.re < q.location.re && (s.im - q.location.im).abs() < ON_CURVE {
            return Err(Error::OnCut(s));
        }
    }
    let mut signs = Vec::new();
    for anchor in family.anchors()? {
        let v = singulant(s, anchor, j, Sign::Plus)?;
        let d = v.derivative.norm().max(1e-300);
        // |Re chi| / |chi'| is the distance to the level set, to first order.
        if v.value.re.abs() / d < ON_CURVE || v.value.im.abs() / d < ON_CURVE {
            return Err(Error::OnCurve(s));
        }
        signs.push(SignPair {
            anchor_k: anchor.k,
            value: v.value,
            re_positive: v.value.re > 0.0,
            im_positive: v.value.im > 0.0,
        });
    }
    let type_b_region = (family == Family::TypeB).then(|| {
        match (signs[0].im_positive, signs[1].im_positive, signs[2].im_positive) {
            (true, true, true) => TypeBRegion::I,
            (true, false, true) => TypeBRegion::II,
            (true, false, false) => TypeBRegion::III,
            (false, false, false) => TypeBRegion::IV,
            _ => TypeBRegion::Other,
        }
    });
    Ok(RegionDescriptor { signs, type_b_region })
}

/// `H = sqrt(1 - 4 W0^3) / chi'` from a computed singulant.
pub fn h_from(v: &SingulantValue) -> Result<Complex64> {
    if v.derivative.norm() < 1e-14 {
        return Err(Error::Invalid("chi' vanishes; H is undefined at the anchor".into()));
    }
    Ok((1.0 - 4.0 * v.w0.powi(3)).sqrt() / (v.derivative * v.sign.factor()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    pub c: Complex64,
    /// Limits far on the `arg chi > 0` and `arg chi < 0` sides.
    pub s_plus: Complex64,
    pub s_minus: Complex64,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Invalid(format!("epsilon {eps} outside (0, 0.5)")));
    }
    Ok(())
}

/// `S = i pi sqrt(eps) H (erf(theta sqrt(|chi| / 2 eps)) + C)`, `theta = arg chi`.
pub fn multiplier_from(v: &SingulantValue, eps: f64, c: Complex64) -> Result<Complex64> {
    check_eps(eps)?;
    let h = h_from(v)?;
    let theta = v.value.arg();
    let arg = theta * (v.value.norm() / (2.0 * eps)).sqrt();
    Ok(I * PI * eps.sqrt() * h * (statrs::function::erf::erf(arg) + c))
}

pub fn multiplier_state(v: &SingulantValue, eps: f64, c: Complex64) -> Result<MultiplierState> {
    check_eps(eps)?;
    let k = I * PI * eps.sqrt() * h_from(v)?;
    Ok(MultiplierState { c, s_plus: k * (1.0 + c), s_minus: k * (c - 1.0) })
}

pub fn stokes_multiplier(s: Complex64, anchor: SingularPoint, j: BranchId, eps: f64, c: Complex64) -> Result<Complex64> {
    multiplier_from(&singulant(s, anchor, j, Sign::Plus)?, eps, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_opt: usize,
    pub kappa: f64,
}

impl Truncation {
    /// Number of series terms kept: the series runs in powers of `eps`
    /// and pairs of terms share one factorial-over-power order.
    pub fn terms(&self) -> usize {
        2 * self.n_opt
    }
}

/// `N = (|chi| / eps + kappa) / 2` with the least `kappa` in `[0, 1)` making
/// `N` an integer; otherwise `N = round(|chi| / 2 eps)` with the implied
/// remainder as `kappa`.
pub fn optimal_truncation(chi: Complex64, eps: f64) -> Result<Truncation> {
    if !(eps > 0.0) || chi.norm() == 0.0 {
        return Err(Error::Invalid("optimal truncation needs eps > 0 and chi != 0".into()));
    }
    let x = chi.norm() / eps;
    if x < 2.0 {
        return Err(Error::DegenerateTruncation(x));
    }
    let up = (x / 2.0).ceil();
    let kappa = 2.0 * up - x;
    if kappa < 1.0 {
        return Ok(Truncation { n_opt: up as usize, kappa });
    }
    let n = (x / 2.0).round();
    Ok(Truncation { n_opt: n as usize, kappa: 2.0 * n - x })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticApproximation {
    pub family: Family,
    pub epsilon: f64,
    /// Multiplier constant per singulant, in [`Family::anchors`] order.
    pub constants: Vec<Complex64>,
}

impl AsymptoticApproximation {
    /// Constants `C = 1`, so every exponential is off on the `arg chi < 0`
    /// side of its Stokes curve.
    pub fn new(family: Family, epsilon: f64) -> Result<Self> {
        check_eps(epsilon)?;
        let n = family.anchors()?.len();
        Ok(AsymptoticApproximation { family, epsilon, constants: vec![Complex64::new(1.0, 0.0); n] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T: Real = f64> {
    pub value: Complex<T>,
    pub terms: usize,
    pub exponential: Complex64,
}

/// Optimally truncated series plus the smoothed exponential contributions.
pub fn evaluate_solution<T: Real>(
    s: Complex64,
    approx: &AsymptoticApproximation,
    table: &CoefficientTable<T>,
) -> Result<Evaluation<T>> {
    evaluate_solution_in(lift::<T>(s), approx, table)
}

/// [`evaluate_solution`] at a point given in the table's precision, so that
/// shifts like `s + eps` are not rounded to double before the series sum.
/// The exponential terms are computed in double either way.
pub fn evaluate_solution_in<T: Real>(
    s_t: Complex<T>,
    approx: &AsymptoticApproximation,
    table: &CoefficientTable<T>,
) -> Result<Evaluation<T>> {
    let s = s_t.to_c64();
    let j = approx.family.branch();
    if table.branch != j {
        return Err(Error::Invalid(format!("table is for branch {}, approximation for {}", table.branch.j(), j.j())));
    }
    let eps = approx.epsilon;
    check_eps(eps)?;
    let anchors = approx.family.anchors()?;
    if approx.constants.len() != anchors.len() {
        return Err(Error::Invalid(format!("expected {} multiplier constants", anchors.len())));
    }
    let lambda = lambda_for(j)?;
    let mut singulants = Vec::with_capacity(anchors.len());
    for a in &anchors {
        singulants.push(singulant(s, *a, j, Sign::Plus)?);
    }
    // The nearest singulant sets the divergence of the series.
    let closest = singulants
        .iter()
        .map(|v| v.value)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("at least one anchor");
    let terms = optimal_truncation(closest, eps)?.terms();
    if table.r_max() + 1 < terms {
        return Err(Error::InsufficientTerms(terms));
    }
    let e = lift::<T>(Complex64::new(eps, 0.0));
    let mut acc = Complex::<T>::zero();
    for r in (0..terms).rev() {
        acc = acc * e + table.entries[r].eval(s_t);
    }
    let mut exponential = Complex64::zero();
    for (v, c) in singulants.iter().zip(&approx.constants) {
        let mult = multiplier_from(v, eps, *c)?;
        if mult.norm() == 0.0 {
            continue;
        }
        let u = prefactor_from(v, lambda, Sign::Plus)?;
        exponential += mult * u * (-v.value / eps).exp();
    }
    Ok(Evaluation { value: acc + lift::<T>(exponential), terms, exponential })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(j: u8) -> BranchId {
        BranchId::new(j).unwrap()
    }

    #[test]
    fn type_a_directions() {
        let p = SingularPoint::new(0);
        let st = initial_directions(p, b(3), CurveKind::Stokes).unwrap();
        assert_eq!(st.len(), 2);
        assert!((st[0] + 0.4 * PI).abs() < 1e-12 && (st[1] - 0.4 * PI).abs() < 1e-12);
        let an = initial_directions(p, b(3), CurveKind::AntiStokes).unwrap();
        assert_eq!(an.len(), 3);
        assert!(an[1].abs() < 1e-12 && (an[2] - 0.8 * PI).abs() < 1e-12);
    }

    #[test]
    fn type_b_directions() {
        let p = SingularPoint::new(0);
        assert_eq!(initial_directions(p, b(4), CurveKind::Stokes).unwrap().len(), 3);
        assert_eq!(initial_directions(p, b(4), CurveKind::AntiStokes).unwrap().len(), 2);
    }

    #[test]
    fn truncation_rules() {
        let t = optimal_truncation(Complex64::new(2.0, 0.0), 0.1).unwrap();
        assert_eq!((t.n_opt, t.kappa), (10, 0.0));
        let t = optimal_truncation(Complex64::new(2.0, 0.0), 0.12).unwrap();
        assert_eq!(t.n_opt, 8);
        assert!(optimal_truncation(Complex64::new(0.1, 0.0), 0.1).is_err());
    }

    #[test]
    fn exact_map_lands_on_q_powers() {
        let eps = Complex64::new(0.0, 0.2);
        let x = map_to_x(eps * 3.0, MapMode::Exact(eps));
        assert!((x - (1.0 + eps).powi(3)).norm() < 1e-12);
    }
}
