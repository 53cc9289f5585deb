use jla_core::dynamics::{coriolis_matrix, mass_matrix, DynamicsTerms, JointState, ManipulatorModel};
use jla_core::parametrization::{to_xi_dynamics, JointLimits, XiState};
use jla_core::{Error, Matrix, Vector};
use proptest::prelude::*;

fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

fn limits() -> JointLimits {
    JointLimits::hip_knee()
}

/// Position along `xi(t) = xi0 + a t + b t^2 / 2`.
fn q_along(l: &JointLimits, xi0: &Vector, a: &Vector, b: &Vector, t: f64) -> Vector {
    l.q_of_xi(&(xi0 + a * t + b * (0.5 * t * t)))
}

fn xi_terms(model: &ManipulatorModel, l: &JointLimits, xi: &Vector, xi_dot: &Vector) -> (Matrix, Matrix) {
    let q = l.q_of_xi(xi);
    let q_dot = l.jacobian(xi).component_mul(xi_dot);
    let terms = DynamicsTerms::at(model, &JointState::new(q, q_dot));
    let t = to_xi_dynamics(&terms, l, &XiState { xi: xi.clone(), xi_dot: xi_dot.clone() });
    (t.m_xi, t.c_xi)
}

proptest! {
    #[test]
    fn q_round_trip(s in proptest::array::uniform2(0.0..1.0f64)) {
        let l = limits();
        let q = Vector::from_fn(2, |i, _| l.q_min()[i] + s[i] * (l.q_max()[i] - l.q_min()[i]));
        match l.xi_of_q(&q) {
            Ok(xi) => prop_assert!((l.q_of_xi(&xi) - &q).amax() <= 1e-10),
            Err(e) => prop_assert!(e.is_out_of_feasible_space() && l.min_margin(&q) < 1e-9),
        }
    }

    #[test]
    fn q_of_xi_is_inside_and_increasing(a in -40.0..40.0f64, b in -40.0..40.0f64) {
        let l = limits();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let ql = l.q_of_xi(&v(&[lo, lo]));
        let qh = l.q_of_xi(&v(&[hi, hi]));
        prop_assert!(l.contains(&ql) && l.contains(&qh));
        prop_assert!(ql[0] <= qh[0] && ql[1] <= qh[1]);
    }

    /// `q' = J xi'` and `q'' = J xi'' + J' xi'` against differences of
    /// `q(xi(t))`.
    #[test]
    fn chain_rule(
        xi0 in proptest::array::uniform2(-4.0..4.0f64),
        a in proptest::array::uniform2(-2.0..2.0f64),
        b in proptest::array::uniform2(-2.0..2.0f64),
    ) {
        let l = limits();
        let (xi0, a, b) = (v(&xi0), v(&a), v(&b));
        let h = 1e-4;
        let q = |t| q_along(&l, &xi0, &a, &b, t);
        let vel = (q(-2.0 * h) - q(2.0 * h) + (q(h) - q(-h)) * 8.0) / (12.0 * h);
        let acc = (q(h) - q(0.0) * 2.0 + q(-h)) / (h * h);
        let jac = l.jacobian(&xi0);
        let expected_vel = jac.component_mul(&a);
        let expected_acc = jac.component_mul(&b) + l.jacobian_dot(&xi0, &a).component_mul(&a);
        prop_assert!((vel - &expected_vel).amax() <= 1e-8 * (1e-3 + expected_vel.amax()));
        prop_assert!((acc - &expected_acc).amax() <= 1e-5 * (1.0 + expected_acc.amax()));
    }

    #[test]
    fn xi_mass_matrix_is_positive(xi in proptest::array::uniform2(-3.0..3.0f64)) {
        let l = limits();
        let (m_xi, _) = xi_terms(&ManipulatorModel::desk(), &l, &v(&xi), &Vector::zeros(2));
        prop_assert!(m_xi.symmetric_eigenvalues().min() > 0.0);
    }

    /// `M_xi' - 2 C_xi` is skew, with `M_xi'` from central differences of
    /// `M_xi` along the motion.
    #[test]
    fn xi_pair_is_skew(
        xi in proptest::array::uniform2(-3.0..3.0f64),
        xi_dot in proptest::array::uniform2(-3.0..3.0f64),
        w in proptest::array::uniform2(-1.0..1.0f64),
    ) {
        let model = ManipulatorModel::desk();
        let l = limits();
        let (xi, xi_dot, w) = (v(&xi), v(&xi_dot), v(&w));
        let h = 1e-6;
        let m_at = |x: &Vector| {
            let jac = Matrix::from_diagonal(&l.jacobian(x));
            &jac * mass_matrix(&model, &l.q_of_xi(x)) * &jac
        };
        let m_dot = (m_at(&(&xi + &xi_dot * h)) - m_at(&(&xi - &xi_dot * h))) / (2.0 * h);
        let (_, c_xi) = xi_terms(&model, &l, &xi, &xi_dot);
        let r = (w.transpose() * (m_dot - c_xi * 2.0) * &w)[0];
        prop_assert!(r.abs() <= 1e-7 * (1.0 + xi_dot.norm()), "residual {}", r);
    }
}

#[test]
fn joint_space_coriolis_enters_xi_terms() {
    let model = ManipulatorModel::desk();
    let l = limits();
    let xi = v(&[0.4, -0.7]);
    let xi_dot = v(&[1.0, 2.0]);
    let q = l.q_of_xi(&xi);
    let jac = l.jacobian(&xi);
    let q_dot = jac.component_mul(&xi_dot);
    let (_, c_xi) = xi_terms(&model, &l, &xi, &xi_dot);
    let m = mass_matrix(&model, &q);
    let c = coriolis_matrix(&model, &q, &q_dot);
    let jd = l.jacobian_dot(&xi, &xi_dot);
    let expected = Matrix::from_fn(2, 2, |r, k| jac[r] * (m[(r, k)] * jd[k] + c[(r, k)] * jac[k]));
    assert!((c_xi - expected).amax() < 1e-14);
}

#[test]
fn degenerate_limits_are_rejected() {
    let err = JointLimits::new(v(&[0.0, -1.0]), v(&[0.0, 1.0])).unwrap_err();
    assert!(matches!(err, Error::InvalidLimits(_)));
    assert!(JointLimits::new(v(&[0.5, -1.0]), v(&[0.0, 1.0])).is_err());
    assert!(JointLimits::new(v(&[f64::NAN, -1.0]), v(&[0.0, 1.0])).is_err());
}
