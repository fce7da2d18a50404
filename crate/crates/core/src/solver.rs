//! Direct iteration of qPI, shooting for asymptotic families, and
//! comparison with the asymptotic approximations.
//!
//! In discrete time `w_n = w(x0 q^n)` the equation reads
//! `w_(n+1) w_(n-1) = 1/w_n - 1/(x0 q^n w_n^2)`.
//!
//! ```
//! use num_complex::Complex64;
//! use qpainleve::solver::{iterate, IterationConfig};
//!
//! let one = Complex64::new(1.0, 0.0);
//! let cfg = IterationConfig { q: Complex64::new(2.0, 0.0), x0: one, w0: one, w1: one, n_max: 2 };
//! let traj = iterate(&cfg).unwrap();
//! assert!((traj.values[2] - 0.5).norm() < 1e-15);
//! ```

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use num_complex::{Complex, Complex64};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientTable;
use crate::error::{Error, Result};
use crate::leading::nearest_singular;
use crate::precision::{lift, CReal, Real};
use crate::stokes::{evaluate_solution, AsymptoticApproximation};

const BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub q: Complex64,
    pub x0: Complex64,
    pub w0: Complex64,
    pub w1: Complex64,
    pub n_max: usize,
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q.norm() > 1.0) || !self.q.is_finite() {
            return Err(Error::Invalid(format!("need |q| > 1, got q = {}", self.q)));
        }
        if self.x0 == Complex64::zero() || !self.x0.is_finite() {
            return Err(Error::Invalid("x0 must be finite and nonzero".into()));
        }
        if self.w0 == Complex64::zero() || self.w1 == Complex64::zero() {
            return Err(Error::Invalid("initial values must be nonzero".into()));
        }
        if self.n_max < 2 {
            return Err(Error::Invalid("n_max must be at least 2".into()));
        }
        Ok(())
    }

    /// `x_n = x0 q^n`.
    pub fn x(&self, n: usize) -> Complex64 {
        self.x0 * self.q.powu(n as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub values: Vec<Complex64>,
    pub config: IterationConfig,
    /// First index with `|w_n|` outside `[1e-12, 1e12]`; the values stop there.
    pub blowup_index: Option<usize>,
}

impl Trajectory {
    /// `|w_(n+1) w_(n-1) w_n^2 - w_n + 1/x_n|` for each interior `n`.
    pub fn residuals(&self) -> Vec<f64> {
        let w = &self.values;
        (1..w.len().saturating_sub(1))
            .map(|n| (w[n + 1] * w[n - 1] * w[n] * w[n] - w[n] + 1.0 / self.config.x(n)).norm())
            .collect()
    }
}

fn out_of_range(w: Complex64) -> bool {
    let m = w.norm();
    !(1.0 / BLOWUP..=BLOWUP).contains(&m) || !m.is_finite()
}

fn step(prev: Complex64, cur: Complex64, x: Complex64) -> Complex64 {
    (1.0 / cur - 1.0 / (x * cur * cur)) / prev
}

pub fn iterate(config: &IterationConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut values = Vec::with_capacity(config.n_max + 1);
    values.push(config.w0);
    values.push(config.w1);
    let mut blowup_index = [0, 1].into_iter().find(|&i| out_of_range(values[i]));
    let mut xn = config.x(1);
    let mut n = 1;
    while blowup_index.is_none() && n < config.n_max {
        let next = step(values[n - 1], values[n], xn);
        values.push(next);
        n += 1;
        xn *= config.q;
        if out_of_range(next) {
            blowup_index = Some(n);
        }
    }
    Ok(Trajectory { values, config: *config, blowup_index })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Nonzero(Complex64),
    /// `w_n ~ 1 / x_n`.
    Vanishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub w0: Complex64,
    pub w1: Complex64,
    pub objective: f64,
    pub newton_steps: usize,
    pub used_simplex: bool,
}

const SHOOT_TOL: f64 = 1e-10;

struct Shooter {
    q: Complex64,
    x0: Complex64,
    n_check: usize,
    target: Target,
}

impl Shooter {
    fn targets(&self) -> [Complex64; 2] {
        let x = |n: usize| self.x0 * self.q.powu(n as u32);
        match self.target {
            Target::Nonzero(t) => [t, t],
            Target::Vanishing => [1.0 / x(self.n_check), 1.0 / x(self.n_check + 1)],
        }
    }

    /// Residuals at the check indices with their Jacobian in `(w0, w1)`,
    /// or `None` on blowup.
    fn residual(&self, w0: Complex64, w1: Complex64) -> Option<([Complex64; 2], [[Complex64; 2]; 2])> {
        if w0 == Complex64::zero() || w1 == Complex64::zero() {
            return None;
        }
        let (mut a, mut b) = (w0, w1);
        // Tangents d/dw0 and d/dw1 of (a, b).
        let (mut da, mut db) = ([Complex64::one(), Complex64::zero()], [Complex64::zero(), Complex64::one()]);
        let mut xn = self.x0 * self.q;
        for _ in 1..=self.n_check {
            let next = step(a, b, xn);
            if out_of_range(next) {
                return None;
            }
            let d_cur = (-1.0 / (b * b) + 2.0 / (xn * b * b * b)) / a;
            let d_prev = -next / a;
            let dn = [d_cur * db[0] + d_prev * da[0], d_cur * db[1] + d_prev * da[1]];
            a = b;
            b = next;
            da = db;
            db = dn;
            xn *= self.q;
        }
        let t = self.targets();
        Some(([a - t[0], b - t[1]], [da, db]))
    }

    /// `(w0, w1)` from iterating backward from the targets at `n_check`.
    fn backward(&self) -> Option<(Complex64, Complex64)> {
        let x = |n: usize| self.x0 * self.q.powu(n as u32);
        let [t0, t1] = match self.target {
            // At w = 1/x exactly the bracket 1/w - 1/(x w^2) vanishes; the
            // next order of w^4 = w - 1/x restores it.
            Target::Vanishing => {
                let refine = |x: Complex64| 1.0 / x + 1.0 / x.powu(4);
                [refine(x(self.n_check)), refine(x(self.n_check + 1))]
            }
            Target::Nonzero(_) => self.targets(),
        };
        let (mut cur, mut next) = (t0, t1);
        for n in (1..=self.n_check).rev() {
            let prev = step(next, cur, x(n));
            if out_of_range(prev) {
                return None;
            }
            next = cur;
            cur = prev;
        }
        Some((cur, next))
    }

    fn objective(&self, w0: Complex64, w1: Complex64) -> f64 {
        match self.residual(w0, w1) {
            Some((r, _)) => r[0].norm_sqr() + r[1].norm_sqr(),
            None => f64::INFINITY,
        }
    }
}

impl CostFunction for Shooter {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let f = self.objective(Complex64::new(p[0], p[1]), Complex64::new(p[2], p[3]));
        Ok(if f.is_finite() { f } else { f64::MAX })
    }
}

/// Damped Gauss-Newton from `(w0, w1)`; returns the best point, its
/// objective, and the number of steps taken.
fn levenberg_marquardt(shooter: &Shooter, w0: Complex64, w1: Complex64, f: f64) -> (Complex64, Complex64, f64, usize) {
    // Levenberg-Marquardt: the Jacobian is badly conditioned because
    // perturbations about a fixed point are neutral, so pure Newton steps
    // overshoot along the weak direction.
    let (mut w0, mut w1, mut f) = (w0, w1, f);
    let mut steps = 0;
    let mut mu = 0.0;
    while f >= SHOOT_TOL && steps < 500 {
        let Some((r, j)) = shooter.residual(w0, w1) else { break };
        // A = J^H J (Hermitian), g = J^H r.
        let a00 = j[0][0].norm_sqr() + j[1][0].norm_sqr();
        let a11 = j[0][1].norm_sqr() + j[1][1].norm_sqr();
        let a01 = j[0][0].conj() * j[0][1] + j[1][0].conj() * j[1][1];
        let g0 = j[0][0].conj() * r[0] + j[1][0].conj() * r[1];
        let g1 = j[0][1].conj() * r[0] + j[1][1].conj() * r[1];
        if mu == 0.0 {
            mu = 1e-6 * a00.max(a11);
        }
        let mut improved = false;
        while mu < 1e30 {
            let (b00, b11) = (a00 + mu, a11 + mu);
            let det = b00 * b11 - a01.norm_sqr();
            let d0 = (g0 * b11 - a01 * g1) / det;
            let d1 = (g1 * b00 - a01.conj() * g0) / det;
            let (c0, c1) = (w0 - d0, w1 - d1);
            let fc = shooter.objective(c0, c1);
            if fc < f {
                w0 = c0;
                w1 = c1;
                f = fc;
                mu = (mu / 3.0).max(1e-300);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        steps += 1;
        if !improved {
            break;
        }
    }
    (w0, w1, f, steps)
}

/// Initial data whose trajectory meets `target` at `n_check` and
/// `n_check + 1`: damped Newton with tangent propagation, falling back to a
/// Nelder-Mead simplex when Newton stalls.
pub fn shoot_initial_conditions(
    target: Target,
    q: Complex64,
    x0: Complex64,
    n_check: usize,
    seed: (Complex64, Complex64),
) -> Result<ShootResult> {
    IterationConfig { q, x0, w0: seed.0, w1: seed.1, n_max: n_check + 1 }.validate()?;
    let shooter = Shooter { q, x0, n_check, target };
    let f = shooter.objective(seed.0, seed.1);
    if !f.is_finite() {
        return Err(Error::NoConvergence("seed trajectory blows up before the check index".into()));
    }
    let (mut w0, mut w1, mut f, mut steps) = levenberg_marquardt(&shooter, seed.0, seed.1, f);
    if f >= SHOOT_TOL {
        // The map is invertible, so the exact pair meeting the targets is
        // the backward iterate of the targets themselves.
        if let Some((b0, b1)) = shooter.backward() {
            let fb = shooter.objective(b0, b1);
            if fb.is_finite() {
                let (c0, c1, fc, more) = levenberg_marquardt(&shooter, b0, b1, fb);
                steps += more;
                if fc < f {
                    (w0, w1, f) = (c0, c1, fc);
                }
            }
        }
    }
    let mut used_simplex = false;
    if f >= SHOOT_TOL {
        used_simplex = true;
        let p = vec![w0.re, w0.im, w1.re, w1.im];
        let scale = 1e-3 * (w0.norm() + w1.norm()).max(1e-3);
        let mut simplex = vec![p.clone()];
        for i in 0..4 {
            let mut v = p.clone();
            v[i] += scale;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-16)
            .map_err(|e| Error::NoConvergence(e.to_string()))?;
        let res = Executor::new(Shooter { q, x0, n_check, target }, solver)
            .configure(|state| state.max_iters(20_000))
            .run()
            .map_err(|e| Error::NoConvergence(e.to_string()))?;
        if let Some(best) = res.state().get_best_param() {
            let (c0, c1) = (Complex64::new(best[0], best[1]), Complex64::new(best[2], best[3]));
            let fc = shooter.objective(c0, c1);
            if fc < f {
                w0 = c0;
                w1 = c1;
                f = fc;
            }
        }
    }
    if f >= SHOOT_TOL {
        return Err(Error::NoConvergence(format!("shooting objective stalled at {f:.3e}")));
    }
    Ok(ShootResult { w0, w1, objective: f, newton_steps: steps, used_simplex })
}

/// `W(s+eps) W(s)^2 W(s-eps) - W(s) + 1 / (x0 (1+eps)^(s/eps))` from the
/// values at `s - eps, s, s + eps`.
pub fn rescaled_residual(w: [Complex64; 3], s: Complex64, eps: f64, x0: Complex64) -> Result<Complex64> {
    Ok(rescaled_residual_in::<f64>(w, s, eps, x0)?)
}

pub fn rescaled_residual_in<T: Real>(w: [Complex<T>; 3], s: Complex64, eps: f64, x0: Complex64) -> Result<Complex<T>> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {eps}")));
    }
    let e = T::from_f64(eps);
    let log_q = (T::one() + e).ln();
    let expo = lift::<T>(s).scale(log_q / e);
    let forcing = Complex::<T>::one() / (lift::<T>(x0) * expo.cexp());
    Ok(w[2] * w[1] * w[1] * w[0] - w[1] + forcing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub s: f64,
    pub w: Complex64,
    pub approx: Complex64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub max_error: f64,
}

/// Compare `w_n` with the approximation at `s_n = s_start + eps n` over
/// `window`, where `q = 1 + eps` must be real with `eps` in `(0, 0.2]` and
/// `x0 = (1 + eps)^(s_start / eps)` real and positive.
pub fn compare_trajectory<T: Real>(
    traj: &Trajectory,
    approx: &AsymptoticApproximation,
    table: &CoefficientTable<T>,
    window: (f64, f64),
) -> Result<ErrorTable> {
    let eps_c = traj.config.q - 1.0;
    if eps_c.im != 0.0 || !(eps_c.re > 0.0 && eps_c.re <= 0.2) {
        return Err(Error::Invalid(format!("quantitative comparison needs real q - 1 in (0, 0.2], got {eps_c}")));
    }
    let x0 = traj.config.x0;
    if x0.im != 0.0 || !(x0.re > 0.0) {
        return Err(Error::Invalid(format!("comparison needs a real positive x0, got {x0}")));
    }
    let eps = eps_c.re;
    // x0 = (1 + eps)^(s_start / eps).
    let s_start = eps * x0.re.ln() / eps.ln_1p();
    if (approx.epsilon - eps).abs() > 1e-12 {
        return Err(Error::Invalid(format!("approximation epsilon {} differs from q - 1 = {eps}", approx.epsilon)));
    }
    let (_, reach) = nearest_singular(table.base);
    let mut rows = Vec::new();
    for (n, w) in traj.values.iter().enumerate() {
        let s = s_start + eps * n as f64;
        if s < window.0 || s > window.1 {
            continue;
        }
        let sc = Complex64::new(s, 0.0);
        if (sc - table.base).norm() > 0.6 * reach {
            return Err(Error::Invalid(format!("s = {s} lies outside the table's accuracy disc")));
        }
        let a = evaluate_solution(sc, approx, table)?.value.to_c64();
        rows.push(ErrorRow { n, s, w: *w, approx: a, error: (w - a).norm() });
    }
    if rows.is_empty() {
        return Err(Error::Invalid("no trajectory points in the window".into()));
    }
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    Ok(ErrorTable { rows, max_error })
}
