//! Singulants, prefactors and the late-order ansatz.
//!
//! A singulant vanishes at its anchor singularity and satisfies
//! `cosh(chi') = sigma(s)` with `sigma = (1 - 2 W0^3) / (2 W0^3)`. It is
//! computed by walking a path from the anchor, carrying the leading-order
//! root and a continuous determination of `arccosh(sigma)` together, and
//! integrating with Gauss-Kronrod steps. On the first segment the
//! parametrization `t = s0 + (q - s0) v^4` turns the `(t - s0)^(1/4)`
//! and `(t - s0)^(-3/4)` endpoint laws into smooth integrands.
//!
//! ```
//! use num_complex::Complex64;
//! use qpainleve::leading::{anchor_of, BranchId};
//! use qpainleve::singulant::{singulant, Sign};
//!
//! let j = BranchId::new(3).unwrap();
//! let chi = singulant(Complex64::new(2.0, 0.0), anchor_of(j).unwrap(), j, Sign::Plus).unwrap();
//! // The real axis right of the anchor is an anti-Stokes line.
//! assert!(chi.value.re.abs() < 1e-8);
//! assert!((chi.value.im + 2.2441).abs() < 1e-3);
//! ```

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leading::{
    anchor_of, branch_value, d0_singular_points, local_expansion, BranchId, SingularPoint,
    SolutionType,
};
use crate::precision::{Ext, Real};
use crate::quadrature;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Per-step bound on the Kronrod/Gauss discrepancy.
const STEP_TOL: f64 = 1e-11;
/// Largest change of the continued `arccosh` across one accepted node.
const MAX_JUMP: f64 = 0.2;
/// Inside this radius of the anchor the local laws drive the predictor.
const NEAR_ANCHOR: f64 = 0.05;
const MIN_CLEARANCE: f64 = 1e-3;
const DETOUR_RADIUS: f64 = 0.15;
const DETOUR_TRIGGER: f64 = 0.1;

/// `sqrt(6 sqrt 2)`, the scale of `chi'` near the anchor.
pub fn local_scale() -> f64 {
    (6.0 * 2f64.sqrt()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

fn sigma_of(w: Complex64) -> Result<Complex64> {
    if w.norm() < 1e-100 {
        return Err(Error::Invalid("W0 vanishes; sigma is unbounded".into()));
    }
    Ok(0.5 / w.powi(3) - 1.0)
}

pub fn sigma(s: Complex64, j: BranchId) -> Result<Complex64> {
    sigma_of(branch_value(s, j)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub anchor: SingularPoint,
    /// Vertices after the anchor; the last one is the target.
    pub waypoints: Vec<Complex64>,
}

fn segment_distance(a: Complex64, b: Complex64, q: Complex64) -> (f64, Complex64, bool) {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return ((q - a).norm(), a, false);
    }
    let u = ((q - a) * d.conj()).re / len2;
    let interior = u > 0.0 && u < 1.0;
    let c = a + d * u.clamp(0.0, 1.0);
    ((q - c).norm(), c, interior)
}

/// Whether `a -> b` crosses the cut of `q`, a point on the cut counting as
/// its upper side.
fn crosses_cut(a: Complex64, b: Complex64, q: Complex64) -> bool {
    let side = |z: Complex64| z.im >= q.im;
    if side(a) == side(b) || a.im == b.im {
        return false;
    }
    let x = a.re + (b.re - a.re) * (q.im - a.im) / (b.im - a.im);
    x < q.re
}

fn singular_points_near(a: Complex64, b: Complex64) -> Vec<SingularPoint> {
    let lo = a.im.min(b.im);
    let hi = a.im.max(b.im);
    let k0 = (3.0 * lo / (2.0 * PI)).floor() as i64 - 1;
    let k1 = (3.0 * hi / (2.0 * PI)).ceil() as i64 + 1;
    (k0..=k1).map(SingularPoint::new).collect()
}

impl PathSpec {
    pub fn straight(anchor: SingularPoint, target: Complex64) -> Self {
        let waypoints = if target == anchor.location { Vec::new() } else { vec![target] };
        PathSpec { anchor, waypoints }
    }

    /// Straight path, deflected by semicircular detours around singular
    /// points of `W_j` and routed right of their cuts.
    pub fn auto(anchor: SingularPoint, j: BranchId, target: Complex64) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::Invalid(format!("non-finite target {target}")));
        }
        let mut path = PathSpec::straight(anchor, target);
        for _ in 0..24 {
            let verts = path.vertices();
            let mut fix = None;
            'scan: for (i, seg) in verts.windows(2).enumerate() {
                let (a, b) = (seg[0], seg[1]);
                for q in singular_points_near(a, b) {
                    let is_anchor = q.k == anchor.k;
                    let relevant = q.is_singular_for(j);
                    if relevant && !(is_anchor && i == 0) && crosses_cut(a, b, q.location) {
                        fix = Some((i, vec![q.location + 0.3]));
                        break 'scan;
                    }
                    if is_anchor {
                        continue;
                    }
                    let (dist, c, interior) = segment_distance(a, b, q.location);
                    if dist < MIN_CLEARANCE || (relevant && interior && dist < DETOUR_TRIGGER) {
                        let dir = (b - a) / (b - a).norm();
                        let mut n = if dist > 1e-12 { (c - q.location) / dist } else { I * dir };
                        if dist <= 1e-12 && n.im < 0.0 {
                            n = -n;
                        }
                        let pts = [PI / 6.0, PI / 2.0, 5.0 * PI / 6.0]
                            .iter()
                            .map(|th| q.location + DETOUR_RADIUS * (n * th.sin() - dir * th.cos()))
                            .collect();
                        fix = Some((i, pts));
                        break 'scan;
                    }
                }
            }
            match fix {
                None => return Ok(path),
                Some((i, pts)) => {
                    for (off, p) in pts.into_iter().enumerate() {
                        path.waypoints.insert(i + off, p);
                    }
                }
            }
        }
        Err(Error::Invalid(format!("could not route a path to {target}")))
    }

    pub fn target(&self) -> Complex64 {
        self.waypoints.last().copied().unwrap_or(self.anchor.location)
    }

    pub fn vertices(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(self.waypoints.len() + 1);
        v.push(self.anchor.location);
        v.extend_from_slice(&self.waypoints);
        v
    }

    /// No segment may pass within `1e-3` of a singular point other than
    /// the anchor.
    pub fn validate(&self) -> Result<()> {
        let verts = self.vertices();
        for seg in verts.windows(2) {
            if !seg[1].is_finite() {
                return Err(Error::Invalid("non-finite waypoint".into()));
            }
            for q in singular_points_near(seg[0], seg[1]) {
                if q.k == self.anchor.k {
                    continue;
                }
                let (dist, _, _) = segment_distance(seg[0], seg[1], q.location);
                if dist < MIN_CLEARANCE {
                    return Err(Error::PathCollision { singular: q.location, dist });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    t: Complex64,
    /// `t - s0`, kept separately so it stays exact near the anchor.
    delta: Complex64,
    w: Complex64,
    /// `W0 = a (1 + y)` with `a` the coalescence value at the anchor.
    y: Complex64,
    /// Continued `arccosh(sigma)`, i.e. `chi'`.
    d: Complex64,
}

fn derivatives(n: &Node) -> (Complex64, Complex64) {
    let w3 = n.w.powi(3);
    // 4 W0^3 - 1 = (1 + y)^3 - 1 since 4 a^3 = 1.
    let y = n.y;
    let wp = (-n.t).exp() / (y * (3.0 + 3.0 * y + y * y));
    let dd = -1.5 * wp / (n.w * w3 * n.d.sinh());
    (wp, dd)
}

/// `1 - exp(-z)` without cancellation for small `z`.
fn one_minus_exp_neg(z: Complex64) -> Complex64 {
    if z.norm() > 1e-2 {
        return 1.0 - (-z).exp();
    }
    let mut term = z;
    let mut acc = z;
    for k in 2..12 {
        term *= -z / k as f64;
        acc += term;
    }
    acc
}

/// Relative offset `y` of the root from the anchor value `a`.
///
/// With `4 a^3 = 1` and `exp(-s0) = 3a/4` the quartic becomes
/// `y^2 (6 + 4y + y^2) = 3 (1 - exp(-delta))`, which stays well conditioned
/// as the two coalescing roots merge.
fn polish_offset(mut y: Complex64, delta: Complex64) -> Option<Complex64> {
    let rhs = 3.0 * one_minus_exp_neg(delta);
    let f = |y: Complex64| y * y * (6.0 + y * (4.0 + y)) - rhs;
    for _ in 0..40 {
        let df = y * (12.0 + y * (12.0 + 4.0 * y));
        let step = f(y) / df;
        if !step.is_finite() {
            return None;
        }
        y -= step;
        if step.norm() <= 1e-15 * y.norm() {
            return Some(y);
        }
    }
    let scale = rhs.norm() + 6.0 * y.norm_sqr();
    (f(y).norm() <= 1e-13 * scale).then_some(y)
}

/// Distance from a root of the quartic to its nearest neighbour, roughly.
fn root_separation(w: Complex64) -> f64 {
    let w2 = w.norm_sqr();
    if w2 < 1e-30 {
        return 1.0;
    }
    ((4.0 * w.powi(3) - 1.0).norm() / (6.0 * w2)).min(1.0)
}

#[derive(Debug, Clone, Copy)]
struct Walker {
    p: Complex64,
    a: Complex64,
    /// `b` times the sign of the square root carried by the branch.
    b: Complex64,
    /// `chi' ~ kappa (t - s0)^(1/4)`.
    kappa: Complex64,
}

impl Walker {
    fn new(anchor: SingularPoint, j: BranchId) -> Result<Self> {
        if !anchor.is_singular_for(j) {
            return Err(Error::Invalid(format!("branch {} is regular at {}", j.j(), anchor.location)));
        }
        let le = local_expansion(anchor.type_a_branch())?;
        let (beta, kappa) = match j.solution_type() {
            SolutionType::TypeA => (1.0, -I),
            SolutionType::TypeB => (-1.0, Complex64::one()),
        };
        Ok(Walker { p: anchor.location, a: le.a, b: le.b * beta, kappa: kappa * local_scale() })
    }

    fn local(&self, delta: Complex64) -> (Complex64, Complex64) {
        let r = delta.sqrt();
        (self.a + self.b * r, self.kappa * r.sqrt())
    }

    fn predict(&self, cur: &Node, delta: Complex64) -> (Complex64, Complex64) {
        if cur.delta == Complex64::zero() {
            return self.local(delta);
        }
        if cur.delta.norm() < NEAR_ANCHOR {
            let (w1, d1) = self.local(delta);
            let (w0, d0) = self.local(cur.delta);
            return (w1 + (cur.w - w0), d1 + (cur.d - d0));
        }
        let (wp, dd) = derivatives(cur);
        let h = delta - cur.delta;
        (cur.w + wp * h, cur.d + dd * h)
    }

    /// Root and `arccosh` determination at `t`, or `None` if the step from
    /// `cur` is too long to identify them unambiguously.
    fn resolve(&self, cur: &Node, delta: Complex64) -> Option<Node> {
        let t = self.p + delta;
        let (wp, dp) = self.predict(cur, delta);
        let y = polish_offset(wp / self.a - 1.0, delta)?;
        let w = self.a * (1.0 + y);
        if (w - wp).norm() > 0.3 * root_separation(wp) {
            return None;
        }
        // sigma - 1 = (1 - 4 W0^3) / (2 W0^3), free of cancellation in y.
        let y3 = (1.0 + y).powi(3);
        let x = -2.0 * y * (3.0 + 3.0 * y + y * y) / y3;
        let base = 2.0 * (0.5 * x).sqrt().asinh();
        let mut cands: Vec<Complex64> = Vec::with_capacity(6);
        for sgn in [1.0, -1.0] {
            let shift = ((dp.im - sgn * base.im) / (2.0 * PI)).round();
            for n in [shift - 1.0, shift, shift + 1.0] {
                cands.push(sgn * base + I * (2.0 * PI * n));
            }
        }
        cands.sort_by(|x, y| (x - dp).norm().total_cmp(&(y - dp).norm()));
        let best = cands[0];
        let runner = cands.iter().find(|c| (**c - best).norm() > 1e-9).copied();
        if let Some(r) = runner {
            if (best - dp).norm() > 0.3 * (r - dp).norm() {
                return None;
            }
        }
        if (best - cur.d).norm() >= MAX_JUMP {
            return None;
        }
        Some(Node { t, delta, w, y, d: best })
    }

    #[allow(clippy::type_complexity)]
    fn step(
        &self,
        cur: &Node,
        map: &dyn Fn(f64) -> (Complex64, Complex64),
        v0: f64,
        v1: f64,
    ) -> Result<Option<(Node, Complex64, Complex64)>> {
        let xs = quadrature::nodes(v0, v1);
        let mut fchi = [Complex64::zero(); 15];
        let mut fg = [Complex64::zero(); 15];
        for k in 0..15 {
            let (delta, dt) = map(xs[k]);
            let Some(n) = self.resolve(cur, delta) else { return Ok(None) };
            let t = n.t;
            if n.d.sinh().norm() < 1e-9 && (v1 - v0) < 1e-6 {
                return Err(Error::TurningPoint(t));
            }
            let (_, dd) = derivatives(&n);
            // W1 / W0' = -t/2, with W1 = -t exp(-t) / (2 (4 W0^3 - 1)).
            let ratio = -0.5 * t;
            fchi[k] = n.d * dt;
            fg[k] = ratio * dd * dt;
        }
        let Some(end) = self.resolve(cur, map(v1).0) else { return Ok(None) };
        let h = 0.5 * (v1 - v0);
        let (kc, gc) = quadrature::estimates(&fchi, h);
        let (kg, gg) = quadrature::estimates(&fg, h);
        if !kc.is_finite() || !kg.is_finite() || (kc - gc).norm() > STEP_TOL || (kg - gg).norm() > STEP_TOL {
            return Ok(None);
        }
        Ok(Some((end, kc, kg)))
    }
}

fn continue_sqrt_sinh(walker: &Walker, n: &Node, prev: Option<Complex64>) -> Complex64 {
    let r = n.d.sinh().sqrt();
    let reference = prev.unwrap_or_else(|| {
        // sinh(chi') ~ kappa delta^(1/4); take the root continuous from 0.
        walker.kappa.sqrt() * (n.delta.ln() / 8.0).exp()
    });
    if (r - reference).norm() <= (r + reference).norm() {
        r
    } else {
        -r
    }
}

/// A singulant carried along a polyline from its anchor.
///
/// Each [`advance_to`](Tracker::advance_to) integrates along a straight
/// segment from the current point; the first segment out of the anchor uses
/// the `v^4` parametrization. Paths are not checked for collisions here.
#[derive(Debug, Clone)]
pub struct Tracker {
    walker: Walker,
    node: Node,
    chi: Complex64,
    g: Complex64,
    sqrt_sinh: Option<Complex64>,
    anchor: SingularPoint,
    branch: BranchId,
}

impl Tracker {
    pub fn start(anchor: SingularPoint, j: BranchId) -> Result<Self> {
        let walker = Walker::new(anchor, j)?;
        let zero = Complex64::zero();
        Ok(Tracker {
            walker,
            node: Node { t: anchor.location, delta: zero, w: walker.a, y: zero, d: zero },
            chi: zero,
            g: zero,
            sqrt_sinh: None,
            anchor,
            branch: j,
        })
    }

    pub fn point(&self) -> Complex64 {
        self.node.t
    }

    pub fn chi(&self) -> Complex64 {
        self.chi
    }

    /// Continued `chi'`.
    pub fn derivative(&self) -> Complex64 {
        self.node.d
    }

    pub fn g(&self) -> Complex64 {
        self.g
    }

    pub fn w0(&self) -> Complex64 {
        self.node.w
    }

    pub fn sqrt_sinh(&self) -> Complex64 {
        self.sqrt_sinh.unwrap_or_else(Complex64::zero)
    }

    pub fn anchor(&self) -> SingularPoint {
        self.anchor
    }

    pub fn branch(&self) -> BranchId {
        self.branch
    }

    pub fn advance_to(&mut self, target: Complex64) -> Result<()> {
        self.advance(target, &[], &mut Vec::new())
    }

    /// As [`advance_to`](Tracker::advance_to), recording `chi'` at each
    /// segment parameter in `marks` (ascending, in `[0, 1]`).
    fn advance(&mut self, target: Complex64, marks: &[f64], samples: &mut Vec<Complex64>) -> Result<()> {
        let p = self.walker.p;
        let a = self.node.delta;
        let b = target - p;
        let len = (b - a).norm();
        let mut mi = 0;
        while mi < marks.len() && marks[mi] <= 0.0 {
            samples.push(self.node.d);
            mi += 1;
        }
        if len == 0.0 {
            samples.extend(std::iter::repeat(self.node.d).take(marks.len() - mi));
            return Ok(());
        }
        let anchored = a == Complex64::zero();
        let map = |v: f64| -> (Complex64, Complex64) {
            if anchored {
                ((b - a) * v.powi(4), (b - a) * (4.0 * v.powi(3)))
            } else {
                (a + (b - a) * v, b - a)
            }
        };
        let dv_max = if anchored { (0.1 / (4.0 * len)).min(0.05) } else { (0.1 / len).min(0.5) };
        let mut dv = if anchored { dv_max.min(0.02) } else { dv_max };
        let mut v = 0.0;
        while v < 1.0 {
            let mut v1 = (v + dv).min(1.0);
            if mi < marks.len() && marks[mi] > v {
                v1 = v1.min(marks[mi]);
            }
            match self.walker.step(&self.node, &map, v, v1)? {
                Some((end, dchi, dg)) => {
                    self.chi += dchi;
                    self.g += dg;
                    self.node = end;
                    self.sqrt_sinh = Some(continue_sqrt_sinh(&self.walker, &self.node, self.sqrt_sinh));
                    v = v1;
                    dv = (dv * 1.5).min(dv_max);
                    while mi < marks.len() && marks[mi] <= v {
                        samples.push(self.node.d);
                        mi += 1;
                    }
                }
                None => {
                    dv = 0.5 * (v1 - v);
                    if dv < 1e-13 {
                        return Err(Error::ContinuationFailed(p + map(v).0));
                    }
                }
            }
        }
        samples.extend(std::iter::repeat(self.node.d).take(marks.len() - mi));
        // Land exactly on the requested point.
        self.node.t = target;
        Ok(())
    }

    /// Snapshot as a [`SingulantValue`] for the given sign.
    pub fn value(&self, sign: Sign) -> Result<SingulantValue> {
        let d = self.node.d;
        let sheet = if self.node.delta == Complex64::zero() {
            0
        } else {
            let base = sigma_of(self.node.w)?.acosh();
            let np = ((d - base).im / (2.0 * PI)).round();
            let nm = ((d + base).im / (2.0 * PI)).round();
            let ep = (d - base - I * (2.0 * PI * np)).norm();
            let em = (d + base - I * (2.0 * PI * nm)).norm();
            if ep <= em {
                np as i64
            } else {
                nm as i64
            }
        };
        let f = sign.factor();
        Ok(SingulantValue {
            point: self.node.t,
            value: self.chi * f,
            derivative: d * f,
            sheet,
            anchor_k: self.anchor.k,
            branch: self.branch.j(),
            sign,
            g: self.g,
            sqrt_sinh: self.sqrt_sinh(),
            w0: self.node.w,
        })
    }
}

/// Continued `arccosh(sigma)` at `steps + 1` points spread evenly over the
/// path's segments, starting from 0 at the anchor.
pub fn continue_arccosh(path: &PathSpec, j: BranchId, steps: usize) -> Result<Vec<Complex64>> {
    path.validate()?;
    let mut tracker = Tracker::start(path.anchor, j)?;
    let nseg = path.waypoints.len();
    let steps = steps.max(1);
    if nseg == 0 {
        return Ok(vec![Complex64::zero(); steps + 1]);
    }
    let mut marks: Vec<Vec<f64>> = vec![Vec::new(); nseg];
    for k in 0..=steps {
        let u = k as f64 * nseg as f64 / steps as f64;
        let seg = (u.floor() as usize).min(nseg - 1);
        marks[seg].push(u - seg as f64);
    }
    let mut samples = Vec::with_capacity(steps + 1);
    for (target, m) in path.waypoints.iter().zip(&marks) {
        tracker.advance(*target, m, &mut samples)?;
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingulantValue {
    pub point: Complex64,
    /// `chi` (or `eta` for branch 4), negated for [`Sign::Minus`].
    pub value: Complex64,
    /// Continued `arccosh(sigma)` at the endpoint, with the same sign.
    pub derivative: Complex64,
    /// `n` with `chi' = +-arccosh(sigma) + 2 pi i n`, principal `arccosh`.
    pub sheet: i64,
    pub anchor_k: i64,
    pub branch: u8,
    pub sign: Sign,
    /// `G`, anchored at the singularity; independent of `sign`.
    pub g: Complex64,
    /// `sqrt(sinh chi')` of the plus singulant, continued from the anchor.
    pub sqrt_sinh: Complex64,
    pub w0: Complex64,
}

pub fn singulant_along(path: &PathSpec, j: BranchId, sign: Sign) -> Result<SingulantValue> {
    path.validate()?;
    let mut tracker = Tracker::start(path.anchor, j)?;
    for target in &path.waypoints {
        tracker.advance_to(*target)?;
    }
    tracker.value(sign)
}

pub fn singulant(s: Complex64, anchor: SingularPoint, j: BranchId, sign: Sign) -> Result<SingulantValue> {
    singulant_along(&PathSpec::auto(anchor, j, s)?, j, sign)
}

pub fn prefactor_g(s: Complex64, anchor: SingularPoint, j: BranchId) -> Result<Complex64> {
    Ok(singulant(s, anchor, j, Sign::Plus)?.g)
}

/// `U = Lambda W0 e^-G / sqrt(sinh chi')`, and for the minus singulant
/// `U- = Lambda~ W0 e^G / sqrt(sinh chi')` with `Lambda~ = -i Lambda`.
pub fn prefactor_u(s: Complex64, anchor: SingularPoint, j: BranchId, sign: Sign) -> Result<Complex64> {
    let v = singulant(s, anchor, j, Sign::Plus)?;
    prefactor_from(&v, lambda_for(j)?, sign)
}

pub fn prefactor_from(v: &SingulantValue, lambda: Complex64, sign: Sign) -> Result<Complex64> {
    if v.sqrt_sinh.norm() < 1e-8 {
        return Err(Error::TurningPoint(v.point));
    }
    Ok(match sign {
        Sign::Plus => lambda * v.w0 * (-v.g).exp() / v.sqrt_sinh,
        Sign::Minus => -I * lambda * v.w0 * v.g.exp() / v.sqrt_sinh,
    })
}

/// Late-order estimate of `W_n(s)` from the even (`2 cosh G`) and odd
/// (`-2 sinh G`) combined forms; branch 4 sums its three anchors in D0.
pub fn late_order_predict(n: usize, s: Complex64, j: BranchId) -> Result<Complex64> {
    if n < 1 {
        return Err(Error::Invalid("late-order forms need n >= 1".into()));
    }
    let anchors: Vec<SingularPoint> = match j.solution_type() {
        SolutionType::TypeA => vec![anchor_of(j)?],
        SolutionType::TypeB => d0_singular_points().to_vec(),
    };
    let lambda = lambda_for(j)?;
    let x = n as f64 - 0.5;
    let lg = statrs::function::gamma::ln_gamma(x);
    let mut total = Complex64::zero();
    for p in anchors {
        let v = singulant(s, p, j, Sign::Plus)?;
        if v.sqrt_sinh.norm() < 1e-8 {
            return Err(Error::TurningPoint(s));
        }
        let combo = if n % 2 == 0 { 2.0 * v.g.cosh() } else { -2.0 * v.g.sinh() };
        total += lambda * v.w0 * combo / v.sqrt_sinh * (lg - x * v.value.ln()).exp();
    }
    Ok(total)
}

/// `H = sqrt(1 - 4 W0^3) / chi'` for a Type A branch at its own anchor.
pub fn h_factor(s: Complex64, j: BranchId) -> Result<Complex64> {
    h_factor_at(s, anchor_of(j)?, j)
}

pub fn h_factor_at(s: Complex64, anchor: SingularPoint, j: BranchId) -> Result<Complex64> {
    let v = singulant(s, anchor, j, Sign::Plus)?;
    if v.derivative.norm() < 1e-14 {
        return Err(Error::Invalid("chi' vanishes; H is undefined at the anchor".into()));
    }
    Ok((1.0 - 4.0 * v.w0.powi(3)).sqrt() / v.derivative)
}

/// Coefficients of the inner problem's far-field expansion.
#[derive(Debug, Clone)]
pub struct InnerCoefficients {
    pub e: Vec<Ext>,
    pub a3: Ext,
    pub b3: Ext,
}

fn cbrt_ext(x: Ext) -> Ext {
    (x.ln() / Ext::from_i64(3)).exp()
}

/// `E_0 .. E_R` from
/// `E_r = -[(a b / 24)(5r - 4)(5r - 6) E_(r-1) + b^2 sum_(k=1)^(r-1) E_(r-k) E_k] / (2 b^2)`.
pub fn inner_coefficients(r_max: usize) -> Result<InnerCoefficients> {
    if r_max > 2000 {
        return Err(Error::Invalid(format!("R = {r_max} exceeds 2000")));
    }
    let one = Ext::one();
    let two = Ext::from_i64(2);
    let a3 = cbrt_ext(one / Ext::from_i64(4));
    let b3 = cbrt_ext(one / (Ext::from_i64(8) * two.sqrt()));
    let ab24 = a3 * b3 / Ext::from_i64(24);
    let b2 = b3 * b3;
    let mut e = Vec::with_capacity(r_max + 1);
    e.push(one);
    for r in 1..=r_max {
        let ri = r as i64;
        let mut conv = Ext::zero();
        for k in 1..r {
            conv = conv + e[r - k] * e[k];
        }
        let lin = ab24 * Ext::from_i64((5 * ri - 4) * (5 * ri - 6)) * e[r - 1];
        e.push(-(lin + b2 * conv) / (two * b2));
    }
    Ok(InnerCoefficients { e, a3, b3 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaEstimate {
    /// Partial estimate for `r = 1 ..= R`.
    pub partials: Vec<Complex64>,
    pub limit: Complex64,
    /// Change of the extrapolated value over the last step.
    pub spread: f64,
}

/// Matching constant of the outer prefactor with the inner expansion,
/// `Lambda = lim b E_r sqrt(kappa) c^(2r - 1/2) / (2 a Gamma(2r - 1/2))`
/// with `kappa = -i sqrt(6 sqrt 2)` and `c = -4 i sqrt(6 sqrt 2) / 5`.
pub fn lambda_constant(r_max: usize) -> Result<LambdaEstimate> {
    if r_max < 200 {
        return Err(Error::Invalid(format!("R = {r_max} is below the 200 needed for the tail")));
    }
    let inner = inner_coefficients(r_max)?;
    let k = local_scale();
    let c_abs = Ext::from_f64(4.0) * Ext::from_f64(6.0 * 2f64.sqrt()).sqrt() / Ext::from_i64(5);
    let c2 = c_abs * c_abs;
    let half = Ext::one() / Ext::from_i64(2);
    // |c|^(2r - 1/2) / Gamma(2r - 1/2), starting from Gamma(3/2) = sqrt(pi)/2.
    let mut g = c_abs * c_abs.sqrt() / (Ext::pi().sqrt() * half);
    let scale = inner.b3 * Ext::from_f64(k).sqrt() / (Ext::from_i64(2) * inner.a3);
    let mut partials = Vec::with_capacity(r_max);
    let mut phases = Vec::with_capacity(r_max);
    let mut mags = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let x = 2.0 * r as f64 - 0.5;
        // arg kappa / 2 + (2r - 1/2) arg c, reduced mod 2 pi before use.
        let phase = (-PI / 4.0 + (-PI / 2.0) * (x % 4.0)).rem_euclid(2.0 * PI);
        let mag = scale * inner.e[r] * g;
        partials.push(Complex64::from_polar(1.0, phase) * mag.to_f64());
        phases.push(phase);
        mags.push(mag);
        let rr = Ext::from_i64(2 * r as i64);
        g = g * c2 / ((rr - half) * (rr + half));
    }
    // The phases differ by multiples of pi; extrapolate the signed real
    // sequence in extended precision, where the Richardson weights cannot
    // amplify rounding.
    let phi = phases[r_max - 1];
    let signed: Vec<Ext> = phases
        .iter()
        .zip(&mags)
        .map(|(ph, m)| if (ph - phi).cos() > 0.0 { *m } else { -*m })
        .collect();
    const ORDER: usize = 8;
    let m = r_max - ORDER - 1;
    let last = richardson_ext(&signed, m, ORDER);
    let prev = richardson_ext(&signed, m - 1, ORDER);
    let spread = (last - prev).abs().to_f64();
    let limit = Complex64::from_polar(1.0, phi) * last.to_f64();
    if spread > 1e-8 * limit.norm().max(1e-3) {
        return Err(Error::NoConvergence(format!("Lambda tail still moves by {spread:.3e}")));
    }
    Ok(LambdaEstimate { partials, limit, spread })
}

/// Order-`k` Richardson estimate from `x[m ..= m + k]`, `x[i]` being the
/// term with index `i + 1`.
fn richardson_ext(x: &[Ext], m: usize, k: usize) -> Ext {
    let mut fact = vec![Ext::one(); k + 1];
    for i in 1..=k {
        fact[i] = fact[i - 1] * Ext::from_i64(i as i64);
    }
    let mut acc = Ext::zero();
    for j in 0..=k {
        let n = Ext::from_i64((m + j + 1) as i64);
        let mut nk = Ext::one();
        for _ in 0..k {
            nk = nk * n;
        }
        let term = x[m + j] * nk / (fact[j] * fact[k - j]);
        acc = if (k + j) % 2 == 0 { acc + term } else { acc - term };
    }
    acc
}

/// `Lambda` of the three Type A branches (shared), cached from `R = 1000`.
pub fn lambda_type_a() -> Result<Complex64> {
    static CELL: OnceLock<std::result::Result<Complex64, Error>> = OnceLock::new();
    CELL.get_or_init(|| lambda_constant(1000).map(|e| e.limit)).clone()
}

/// `Lambda_j`: equal for the three Type A branches, since the inner
/// recurrence depends only on `a_j / b_j`; branch 4 carries `-b_j`, which
/// flips the sign of every odd `E_r` and hence of the limit.
pub fn lambda_for(j: BranchId) -> Result<Complex64> {
    let l = lambda_type_a()?;
    Ok(match j.solution_type() {
        SolutionType::TypeA => l,
        SolutionType::TypeB => -l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn b(j: u8) -> BranchId {
        BranchId::new(j).unwrap()
    }

    #[test]
    fn sigma_limits() {
        let p = SingularPoint::new(0).location;
        assert!((sigma(p + 1e-10, b(3)).unwrap() - 1.0).norm() < 1e-3);
        assert!((sigma(c(30.0, 0.0), b(3)).unwrap() + 0.5).norm() < 1e-10);
        assert!(sigma(c(2.0, 0.0), b(3)).unwrap().im.abs() < 1e-14);
    }

    #[test]
    fn chi_on_the_real_axis() {
        let v = singulant(c(2.0, 0.0), SingularPoint::new(0), b(3), Sign::Plus).unwrap();
        assert!(v.value.re.abs() < 1e-8, "{}", v.value);
        assert!((v.derivative - c(0.0, -2.0008)).norm() < 1e-3, "{}", v.derivative);
        assert!((v.derivative.cosh() - sigma(c(2.0, 0.0), b(3)).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn g_matches_closed_form() {
        // Since W1 / W0' = -t/2, integrating by parts gives G = (chi - s chi') / 2.
        for s in [c(2.0, 0.0), c(1.5, 0.7), c(0.2, -0.4), c(3.0, 1.5)] {
            let v = singulant(s, SingularPoint::new(0), b(3), Sign::Plus).unwrap();
            let closed = 0.5 * (v.value - s * v.derivative);
            assert!((v.g - closed).norm() < 1e-9, "{s}: {} vs {closed}", v.g);
        }
    }

    #[test]
    fn local_law_near_anchor() {
        let p = SingularPoint::new(0);
        for dir in [c(1.0, 0.0), c(0.0, 1.0), c(-0.6, -0.8)] {
            let d = dir * 1e-8;
            let v = singulant(p.location + d, p, b(3), Sign::Plus).unwrap();
            let ratio = v.value.norm() / d.norm().powf(1.25);
            assert!((ratio - 4.0 * local_scale() / 5.0).abs() < 1e-3, "{ratio}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = SingularPoint::new(0);
        let s = c(1.7, 0.4);
        let h = 1e-4;
        let f = |z| singulant(z, p, b(3), Sign::Plus).unwrap();
        let fd = (f(s + h).value - f(s - h).value) / (2.0 * h);
        assert!((fd - f(s).derivative).norm() < 1e-6);
    }

    #[test]
    fn path_independence() {
        let p = SingularPoint::new(0);
        let target = c(2.5, 0.6);
        let direct = singulant_along(&PathSpec::straight(p, target), b(3), Sign::Plus).unwrap();
        let bent = PathSpec { anchor: p, waypoints: vec![c(1.3, -0.5), c(2.8, -0.2), target] };
        let other = singulant_along(&bent, b(3), Sign::Plus).unwrap();
        assert!((direct.value - other.value).norm() < 1e-8);
        assert!((direct.g - other.g).norm() < 1e-8);
    }

    #[test]
    fn arccosh_continuation_is_imaginary_on_the_axis() {
        let p = SingularPoint::new(0);
        let path = PathSpec::straight(p, c(3.0, 0.0));
        let vals = continue_arccosh(&path, b(3), 50).unwrap();
        assert_eq!(vals[0], Complex64::zero());
        assert!(vals.iter().all(|v| v.re.abs() < 1e-8));
    }

    #[test]
    fn collision_is_rejected() {
        let p = SingularPoint::new(0);
        let q = SingularPoint::new(1).location;
        let path = PathSpec { anchor: p, waypoints: vec![q + c(0.0, 1e-4), c(2.0, 0.0)] };
        assert!(matches!(path.validate(), Err(Error::PathCollision { .. })));
    }

    #[test]
    fn inner_recurrence_start() {
        let inner = inner_coefficients(3).unwrap();
        assert_eq!(inner.e[0], Ext::one());
        assert!((inner.e[1].to_f64() - 0.0294628).abs() < 1e-6);
    }

    #[test]
    fn lambda_limit_is_real() {
        let est = lambda_constant(400).unwrap();
        assert!(est.limit.im.abs() < 1e-5);
        assert!(est.limit.re < 0.0);
    }

    #[test]
    fn minus_prefactor_ratio() {
        let s = c(2.0, 0.3);
        let p = SingularPoint::new(0);
        let v = singulant(s, p, b(3), Sign::Plus).unwrap();
        let up = prefactor_from(&v, c(-0.07, 0.0), Sign::Plus).unwrap();
        let um = prefactor_from(&v, c(-0.07, 0.0), Sign::Minus).unwrap();
        assert!((um / up - (-I) * (2.0 * v.g).exp()).norm() < 1e-12);
    }
}
