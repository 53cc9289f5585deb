//! Built-in invariant checks: mass matrix positivity, skew symmetry of
//! `M' - 2C` in both coordinate systems, parametrization Jacobians against
//! finite differences, round trips, and the Lyapunov radial probe.

use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::radial_unboundedness_probe;
use crate::control::ControlGains;
use crate::dynamics::{
    assembled, coriolis_matrix, ee_jacobian, forward_kinematics, gravity_vector, mass_matrix,
    DynamicsTerms, ManipulatorModel,
};
use crate::parametrization::{to_xi_dynamics, JointLimits, XiState};
use crate::{Matrix, Vector};

pub type CoriolisFn = fn(&ManipulatorModel, &Vector, &Vector) -> Matrix;

/// What the checks run against. The Coriolis function is swappable so the
/// suite itself can be shown to catch a broken implementation.
#[derive(Debug, Clone)]
pub struct SelfTestSetup {
    pub model: ManipulatorModel,
    pub limits: JointLimits,
    pub gains: ControlGains,
    pub coriolis: CoriolisFn,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SelfTestSetup {
    fn default() -> Self {
        Self {
            model: ManipulatorModel::desk(),
            limits: JointLimits::hip_knee(),
            gains: ControlGains::diagonal(&[20.0, 10.0], &[5.0, 2.0]).expect("valid gains"),
            coriolis: coriolis_matrix,
            samples: 1000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity, for the report.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestReport {
    pub checks: Vec<CheckResult>,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    /// One line per check: `PASS name  detail`.
    pub fn matrix(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{tag}  {:width$}  {}", c.name, c.detail);
        }
        out
    }
}

/// `M' = sum_i dM/dq_i q'_i`, from the analytic partials.
pub fn mass_matrix_rate(model: &ManipulatorModel, q: &Vector, q_dot: &Vector) -> Matrix {
    let n = model.n_links();
    assembled::mass_matrix_partials(model, q)
        .iter()
        .zip(q_dot.iter())
        .fold(Matrix::zeros(n, n), |acc, (dm, v)| acc + dm * *v)
}

struct Sampler<'a> {
    rng: ChaCha8Rng,
    limits: &'a JointLimits,
}

impl Sampler<'_> {
    fn vector(&mut self, n: usize, bound: f64) -> Vector {
        Vector::from_fn(n, |_, _| self.rng.random_range(-bound..bound))
    }

    fn q(&mut self) -> Vector {
        let n = self.limits.n();
        Vector::from_fn(n, |i, _| {
            let lo = self.limits.q_min()[i];
            let hi = self.limits.q_max()[i];
            self.rng.random_range(lo..hi)
        })
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn run_selftest(setup: &SelfTestSetup) -> SelfTestReport {
    let model = &setup.model;
    let limits = &setup.limits;
    let n = model.n_links();
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(setup.seed),
        limits,
    };
    let mut checks = Vec::new();

    let mut min_eig = f64::INFINITY;
    let mut min_eig_xi = f64::INFINITY;
    let mut skew = 0.0f64;
    let mut skew_xi = 0.0f64;
    for _ in 0..setup.samples {
        let xi = s.vector(n, 3.0);
        let xi_dot = s.vector(n, 5.0);
        let v = s.vector(n, 1.0);
        let q = limits.q_of_xi(&xi);
        let jac = limits.jacobian(&xi);
        let q_dot = xi_dot.component_mul(&jac);

        let m = mass_matrix(model, &q);
        let c = (setup.coriolis)(model, &q, &q_dot);
        min_eig = min_eig.min(m.clone().symmetric_eigenvalues().min());
        let m_rate = mass_matrix_rate(model, &q, &q_dot);
        let scale = v.norm_squared() * q_dot.norm().max(f64::MIN_POSITIVE);
        skew = skew.max((v.transpose() * (&m_rate - &c * 2.0) * &v)[0].abs() / scale);

        let terms = DynamicsTerms {
            m: m.clone(),
            c,
            g: gravity_vector(model, &q),
        };
        let state = XiState { xi: xi.clone(), xi_dot: xi_dot.clone() };
        let xt = to_xi_dynamics(&terms, limits, &state);
        min_eig_xi = min_eig_xi.min(xt.m_xi.clone().symmetric_eigenvalues().min());
        let jac_dot = limits.jacobian_dot(&xi, &xi_dot);
        let jm = Matrix::from_diagonal(&jac);
        let jdm = Matrix::from_diagonal(&jac_dot);
        let m_xi_rate = &jdm * &m * &jm + &jm * &m_rate * &jm + &jm * &m * &jdm;
        let scale_xi = v.norm_squared() * xi_dot.norm().max(f64::MIN_POSITIVE);
        skew_xi = skew_xi.max((v.transpose() * (m_xi_rate - &xt.c_xi * 2.0) * &v)[0].abs() / scale_xi);
    }
    checks.push(check("mass matrix SPD", min_eig > 0.0, format!("min eigenvalue {min_eig:.3e}")));
    checks.push(check(
        "xi mass matrix SPD (|xi| <= 3)",
        min_eig_xi > 0.0,
        format!("min eigenvalue {min_eig_xi:.3e}"),
    ));
    checks.push(check(
        "skew symmetry M' - 2C",
        skew <= 1e-8,
        format!("max |v'(M'-2C)v| / (|v|^2 |q'|) = {skew:.3e}"),
    ));
    checks.push(check(
        "skew symmetry M_xi' - 2C_xi",
        skew_xi <= 1e-8,
        format!("max |v'(M_xi'-2C_xi)v| / (|v|^2 |xi'|) = {skew_xi:.3e}"),
    ));

    let mut jac_err = 0.0f64;
    let mut jac_dot_err = 0.0f64;
    for _ in 0..setup.samples {
        let xi = s.vector(n, 5.0);
        let xi_dot = s.vector(n, 5.0);
        let dq = five_point(|h| limits.q_of_xi(&xi.add_scalar(h)), 1e-3);
        let jac = limits.jacobian(&xi);
        jac_err = jac_err.max(rel_err(&dq, &jac));
        let dj = five_point(|h| limits.jacobian(&(&xi + &xi_dot * h)), 1e-3);
        jac_dot_err = jac_dot_err.max(rel_err(&dj, &limits.jacobian_dot(&xi, &xi_dot)));
    }
    checks.push(check("J vs finite differences", jac_err <= 1e-6, format!("max rel err {jac_err:.3e}")));
    checks.push(check(
        "J' vs finite differences",
        jac_dot_err <= 1e-6,
        format!("max rel err {jac_dot_err:.3e}"),
    ));

    let mut ee_err = 0.0f64;
    for _ in 0..setup.samples.min(200) {
        let q = s.q();
        let jee = ee_jacobian(model, &q);
        let h = 1e-6;
        for j in 0..n {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += h;
            qm[j] -= h;
            let (p, m) = (forward_kinematics(model, &qp), forward_kinematics(model, &qm));
            for r in 0..2 {
                ee_err = ee_err.max(((p[r] - m[r]) / (2.0 * h) - jee[(r, j)]).abs());
            }
        }
    }
    checks.push(check(
        "end-effector Jacobian vs finite differences",
        ee_err <= 1e-6,
        format!("max abs err {ee_err:.3e}"),
    ));

    let mut round_trip = 0.0f64;
    let mut inside = true;
    for _ in 0..setup.samples {
        let xi = s.vector(n, 15.0);
        let q = limits.q_of_xi(&xi);
        inside &= limits.contains(&q);
        if let Ok(back) = limits.xi_of_q(&q) {
            round_trip = round_trip.max((limits.q_of_xi(&back) - &q).amax());
        }
    }
    checks.push(check(
        "round trip q -> xi -> q",
        round_trip <= 1e-10,
        format!("max abs err {round_trip:.3e} rad"),
    ));
    checks.push(check("q(xi) strictly inside limits", inside, format!("{} samples", setup.samples)));

    let probe = radial_unboundedness_probe(&setup.gains, limits, model, 16);
    let min_growth = probe.rays.iter().map(|r| r.growth).fold(f64::INFINITY, f64::min);
    checks.push(check(
        "Lyapunov radially unbounded",
        probe.unbounded() && probe.axis_rays_monotone(),
        format!("min growth {min_growth:.3e} over {} rays", probe.rays.len()),
    ));

    SelfTestReport { checks }
}

/// Fourth-order central difference of `f` at 0.
fn five_point(f: impl Fn(f64) -> Vector, h: f64) -> Vector {
    (f(-2.0 * h) - f(2.0 * h) + (f(h) - f(-h)) * 8.0) / (12.0 * h)
}

fn rel_err(approx: &Vector, exact: &Vector) -> f64 {
    approx
        .iter()
        .zip(exact.iter())
        .map(|(a, e)| (a - e).abs() / e.abs().max(1e-300))
        .fold(0.0, f64::max)
}
