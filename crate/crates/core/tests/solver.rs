use num_complex::Complex64 as C;
use proptest::prelude::*;
use qpainleve::leading::{branch_value, BranchId};
use qpainleve::solver::*;

const PUBLISHED_W0: C = C::new(0.846885522, 0.798385416);
const PUBLISHED_W1: C = C::new(-0.502881648, -0.650433326);

fn omega() -> C {
    C::new(-0.5, 0.75f64.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // The iteration satisfies the equation to rounding wherever it is finite.
    #[test]
    fn trajectories_satisfy_the_equation(
        qm in 1.01..1.5f64, qa in -0.5..0.5f64,
        x0 in (0.5..2.0f64, -1.0..1.0f64),
        w0 in (0.3..2.0f64, -1.0..1.0f64), w1 in (0.3..2.0f64, -1.0..1.0f64),
    ) {
        let cfg = IterationConfig {
            q: C::from_polar(qm, qa),
            x0: C::new(x0.0, x0.1),
            w0: C::new(w0.0, w0.1),
            w1: C::new(w1.0, w1.1),
            n_max: 120,
        };
        let t = iterate(&cfg).unwrap();
        let w = &t.values;
        let end = t.blowup_index.unwrap_or(w.len());
        for (i, r) in t.residuals().iter().enumerate().take(end.saturating_sub(2)) {
            let n = i + 1;
            let scale = (w[n + 1] * w[n - 1] * w[n] * w[n]).norm() + w[n].norm() + (1.0 / cfg.x(n)).norm();
            prop_assert!(*r <= 1e-12 * scale, "n = {}: {} vs scale {}", n, r, scale);
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let one = C::new(1.0, 0.0);
    let base = IterationConfig { q: C::new(1.1, 0.0), x0: one, w0: one, w1: one, n_max: 10 };
    assert!(iterate(&IterationConfig { q: one, ..base }).is_err());
    assert!(iterate(&IterationConfig { x0: C::new(0.0, 0.0), ..base }).is_err());
    assert!(iterate(&IterationConfig { w1: C::new(0.0, 0.0), ..base }).is_err());
    assert!(iterate(&IterationConfig { n_max: 1, ..base }).is_err());
}

#[test]
fn published_pair_approaches_omega() {
    let cfg = IterationConfig { q: C::new(1.0, 0.2), x0: C::new(1.0, 0.0), w0: PUBLISHED_W0, w1: PUBLISHED_W1, n_max: 600 };
    let t = iterate(&cfg).unwrap();
    assert!(t.blowup_index.is_none());
    let tail = (t.values[600] - omega()).norm();
    assert!(tail < 1e-2, "{tail}");
}

#[test]
fn shooting_is_idempotent() {
    let q = C::new(1.0, 0.2);
    let x0 = C::new(1.0, 0.0);
    let first = shoot_initial_conditions(Target::Nonzero(omega()), q, x0, 600, (PUBLISHED_W0, PUBLISHED_W1)).unwrap();
    let again = shoot_initial_conditions(Target::Nonzero(omega()), q, x0, 600, (first.w0, first.w1)).unwrap();
    assert_eq!(again.newton_steps, 0);
    assert!((again.w0 - first.w0).norm() + (again.w1 - first.w1).norm() < 1e-8);
    assert!((first.w0 - PUBLISHED_W0).norm() < 1e-6, "{}", first.w0);
}

#[test]
fn real_q_shot_settles_on_one() {
    let q = C::new(1.05, 0.0);
    let x0 = C::new(1.0, 0.0);
    let r = shoot_initial_conditions(Target::Nonzero(C::new(1.0, 0.0)), q, x0, 200, (C::new(1.0, 0.0), C::new(1.0, 0.0))).unwrap();
    let t = iterate(&IterationConfig { q, x0, w0: r.w0, w1: r.w1, n_max: 200 }).unwrap();
    assert!((t.values[200] - 1.0).norm() < 1e-3);
}

#[test]
fn vanishing_shot_decays_like_one_over_x() {
    let q = C::new(1.05, 0.0);
    let x0 = C::new(1.0, 0.0);
    let r = shoot_initial_conditions(Target::Vanishing, q, x0, 200, (C::new(0.5, 0.0), C::new(0.5, 0.0))).unwrap();
    let cfg = IterationConfig { q, x0, w0: r.w0, w1: r.w1, n_max: 200 };
    let t = iterate(&cfg).unwrap();
    assert!((t.values[200] * cfg.x(200) - 1.0).norm() < 1e-3);
}

#[test]
fn leading_order_triple_has_order_eps_residual() {
    let j = BranchId::new(3).unwrap();
    let s = C::new(2.5, 0.0);
    let res = |eps: f64| {
        let w = [s - eps, s, s + eps].map(|z| branch_value(z, j).unwrap());
        rescaled_residual(w, s, eps, C::new(1.0, 0.0)).unwrap().norm()
    };
    let (a, b) = (res(0.02), res(0.01));
    assert!(a < 0.02 && (a / b - 2.0).abs() < 0.1, "{a:e} {b:e}");
    assert!(rescaled_residual([C::new(1.0, 0.0); 3], s, 0.0, C::new(1.0, 0.0)).is_err());
}
