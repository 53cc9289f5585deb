//! Rigid-body dynamics of a planar serial manipulator with revolute joints.
//!
//! Joint angles are relative: link `i` points along the absolute angle
//! `q[0] + ... + q[i]`, measured from the base `+x` axis. Gravity acts along
//! `-y`. The equations of motion are
//!
//! ```text
//! M(q) q'' + C(q, q') q' + G(q) = tau
//! ```
//!
//! with `C` assembled from Christoffel symbols of the first kind, so that
//! `M' - 2C` is skew-symmetric.
//!
//! Two-link arms use a closed form; any other link count goes through the
//! generic per-link Jacobian assembly. Both are public so they can be
//! cross-checked against each other.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Physical parameters of an n-link planar arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ManipulatorModel {
    link_mass: Vec<f64>,
    link_length: Vec<f64>,
    com_offset: Vec<f64>,
    link_inertia: Vec<f64>,
    gravity: f64,
    viscous_friction: f64,
}

impl ManipulatorModel {
    pub fn new(
        link_mass: Vec<f64>,
        link_length: Vec<f64>,
        com_offset: Vec<f64>,
        link_inertia: Vec<f64>,
        gravity: f64,
    ) -> Result<Self> {
        let n = link_mass.len();
        if n == 0 {
            return Err(Error::InvalidModel("at least one link is required".into()));
        }
        for (what, len) in [
            ("link_length", link_length.len()),
            ("com_offset", com_offset.len()),
            ("link_inertia", link_inertia.len()),
        ] {
            if len != n {
                return Err(Error::InvalidModel(format!(
                    "{what} has {len} entries but there are {n} links"
                )));
            }
        }
        for i in 0..n {
            if !(link_mass[i].is_finite() && link_mass[i] > 0.0) {
                return Err(Error::InvalidModel(format!("link {i} mass must be positive")));
            }
            if !(link_length[i].is_finite() && link_length[i] > 0.0) {
                return Err(Error::InvalidModel(format!("link {i} length must be positive")));
            }
            if !(com_offset[i].is_finite() && com_offset[i] > 0.0 && com_offset[i] <= link_length[i])
            {
                return Err(Error::InvalidModel(format!(
                    "link {i} center of mass offset must lie in (0, length]"
                )));
            }
            if !(link_inertia[i].is_finite() && link_inertia[i] >= 0.0) {
                return Err(Error::InvalidModel(format!("link {i} inertia must be nonnegative")));
            }
        }
        if !gravity.is_finite() {
            return Err(Error::InvalidModel("gravity must be finite".into()));
        }
        Ok(Self {
            link_mass,
            link_length,
            com_offset,
            link_inertia,
            gravity,
            viscous_friction: 0.0,
        })
    }

    /// The reference two-link plant used by all shipped experiments:
    /// uniform rods of 2 kg and 1 kg, both 0.4 m long.
    pub fn desk() -> Self {
        let mass = vec![2.0, 1.0];
        let length = vec![0.4, 0.4];
        let com = length.iter().map(|l| l / 2.0).collect();
        let inertia = mass
            .iter()
            .zip(&length)
            .map(|(m, l)| m * l * l / 12.0)
            .collect();
        Self::new(mass, length, com, inertia, 9.81).expect("desk model is valid")
    }

    /// Viscous joint friction coefficient in N·m·s/rad (plant side only).
    pub fn with_viscous_friction(mut self, coefficient: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient >= 0.0) {
            return Err(Error::InvalidModel(
                "viscous friction must be finite and nonnegative".into(),
            ));
        }
        self.viscous_friction = coefficient;
        Ok(self)
    }

    pub fn with_gravity(mut self, gravity: f64) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn n_links(&self) -> usize {
        self.link_mass.len()
    }

    pub fn link_mass(&self) -> &[f64] {
        &self.link_mass
    }

    pub fn link_length(&self) -> &[f64] {
        &self.link_length
    }

    pub fn com_offset(&self) -> &[f64] {
        &self.com_offset
    }

    pub fn link_inertia(&self) -> &[f64] {
        &self.link_inertia
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn viscous_friction(&self) -> f64 {
        self.viscous_friction
    }
}

/// Joint positions (rad) and velocities (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: Vector,
    pub q_dot: Vector,
}

impl JointState {
    pub fn new(q: Vector, q_dot: Vector) -> Self {
        Self { q, q_dot }
    }

    pub fn at_rest(q: Vector) -> Self {
        let n = q.len();
        Self {
            q,
            q_dot: Vector::zeros(n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.q_dot.iter()).all(|x| x.is_finite())
    }
}

/// `(M, C, G)` evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    pub m: Matrix,
    pub c: Matrix,
    pub g: Vector,
}

impl DynamicsTerms {
    pub fn at(model: &ManipulatorModel, state: &JointState) -> Self {
        Self {
            m: mass_matrix(model, &state.q),
            c: coriolis_matrix(model, &state.q, &state.q_dot),
            g: gravity_vector(model, &state.q),
        }
    }
}

pub fn mass_matrix(model: &ManipulatorModel, q: &Vector) -> Matrix {
    if model.n_links() == 2 {
        two_link::mass_matrix(model, q)
    } else {
        assembled::mass_matrix(model, q)
    }
}

pub fn coriolis_matrix(model: &ManipulatorModel, q: &Vector, q_dot: &Vector) -> Matrix {
    if model.n_links() == 2 {
        two_link::coriolis_matrix(model, q, q_dot)
    } else {
        assembled::coriolis_matrix(model, q, q_dot)
    }
}

pub fn gravity_vector(model: &ManipulatorModel, q: &Vector) -> Vector {
    if model.n_links() == 2 {
        two_link::gravity_vector(model, q)
    } else {
        assembled::gravity_vector(model, q)
    }
}

/// Planar end-effector position Jacobian `d(x, y)/dq`, shape 2×n.
pub fn ee_jacobian(model: &ManipulatorModel, q: &Vector) -> Matrix {
    let n = model.n_links();
    let theta = absolute_angles(q);
    let mut jac = Matrix::zeros(2, n);
    for j in 0..n {
        for k in j..n {
            let l = model.link_length[k];
            jac[(0, j)] -= l * theta[k].sin();
            jac[(1, j)] += l * theta[k].cos();
        }
    }
    jac
}

/// Planar end-effector position in the base frame.
pub fn forward_kinematics(model: &ManipulatorModel, q: &Vector) -> [f64; 2] {
    let theta = absolute_angles(q);
    let mut p = [0.0; 2];
    for (k, l) in model.link_length.iter().enumerate() {
        p[0] += l * theta[k].cos();
        p[1] += l * theta[k].sin();
    }
    p
}

pub fn potential_energy(model: &ManipulatorModel, q: &Vector) -> f64 {
    let theta = absolute_angles(q);
    let mut y = 0.0;
    let mut energy = 0.0;
    for i in 0..model.n_links() {
        let y_com = y + model.com_offset[i] * theta[i].sin();
        energy += model.link_mass[i] * model.gravity * y_com;
        y += model.link_length[i] * theta[i].sin();
    }
    energy
}

pub fn kinetic_energy(model: &ManipulatorModel, state: &JointState) -> f64 {
    0.5 * state
        .q_dot
        .dot(&(mass_matrix(model, &state.q) * &state.q_dot))
}

/// Solves the equations of motion for `q''` given the applied joint torques
/// (control plus any mapped external force). Viscous friction, if set on
/// the model, opposes `q'`.
pub fn forward_dynamics(
    model: &ManipulatorModel,
    state: &JointState,
    applied_torque: &Vector,
) -> Result<Vector> {
    forward_dynamics_with(model, state, &DynamicsTerms::at(model, state), applied_torque)
}

/// [`forward_dynamics`] with `(M, C, G)` already evaluated at `state`.
pub fn forward_dynamics_with(
    model: &ManipulatorModel,
    state: &JointState,
    terms: &DynamicsTerms,
    applied_torque: &Vector,
) -> Result<Vector> {
    let rhs = applied_torque
        - &terms.c * &state.q_dot
        - &terms.g
        - &state.q_dot * model.viscous_friction;
    let chol = Cholesky::new(terms.m.clone()).ok_or(Error::NumericalDivergence)?;
    Ok(chol.solve(&rhs))
}

fn absolute_angles(q: &Vector) -> Vec<f64> {
    q.iter()
        .scan(0.0, |acc, qi| {
            *acc += qi;
            Some(*acc)
        })
        .collect()
}

/// Closed-form expressions for the two-link arm.
pub mod two_link {
    use super::ManipulatorModel;
    use crate::{Matrix, Vector};

    struct Params {
        a11: f64,
        a12: f64,
        a22: f64,
        /// `m2 * l1 * c2`
        coupling: f64,
    }

    fn params(model: &ManipulatorModel) -> Params {
        let (m1, m2) = (model.link_mass[0], model.link_mass[1]);
        let l1 = model.link_length[0];
        let (c1, c2) = (model.com_offset[0], model.com_offset[1]);
        let (i1, i2) = (model.link_inertia[0], model.link_inertia[1]);
        Params {
            a11: m1 * c1 * c1 + i1 + m2 * (l1 * l1 + c2 * c2) + i2,
            a12: m2 * c2 * c2 + i2,
            a22: m2 * c2 * c2 + i2,
            coupling: m2 * l1 * c2,
        }
    }

    pub fn mass_matrix(model: &ManipulatorModel, q: &Vector) -> Matrix {
        let p = params(model);
        let cos2 = q[1].cos();
        let m11 = p.a11 + 2.0 * p.coupling * cos2;
        let m12 = p.a12 + p.coupling * cos2;
        Matrix::from_row_slice(2, 2, &[m11, m12, m12, p.a22])
    }

    pub fn coriolis_matrix(model: &ManipulatorModel, q: &Vector, q_dot: &Vector) -> Matrix {
        let h = -params(model).coupling * q[1].sin();
        Matrix::from_row_slice(
            2,
            2,
            &[h * q_dot[1], h * (q_dot[0] + q_dot[1]), -h * q_dot[0], 0.0],
        )
    }

    pub fn gravity_vector(model: &ManipulatorModel, q: &Vector) -> Vector {
        let (m1, m2) = (model.link_mass[0], model.link_mass[1]);
        let l1 = model.link_length[0];
        let (c1, c2) = (model.com_offset[0], model.com_offset[1]);
        let g = model.gravity;
        let outer = m2 * c2 * g * (q[0] + q[1]).cos();
        Vector::from_vec(vec![(m1 * c1 + m2 * l1) * g * q[0].cos() + outer, outer])
    }
}

/// Generic assembly from per-link center-of-mass Jacobians, valid for any
/// number of links.
pub mod assembled {
    use super::{absolute_angles, ManipulatorModel};
    use crate::{Matrix, Vector};

    /// Lever arm of link `k` inside the chain that ends at the center of
    /// mass of link `i` (`k <= i`).
    fn lever(model: &ManipulatorModel, k: usize, i: usize) -> f64 {
        if k < i {
            model.link_length[k]
        } else {
            model.com_offset[i]
        }
    }

    /// Linear velocity Jacobian of the center of mass of link `i`, 2×n.
    fn com_jacobian(model: &ManipulatorModel, theta: &[f64], i: usize) -> Matrix {
        let n = model.n_links();
        let mut jac = Matrix::zeros(2, n);
        for j in 0..=i {
            for k in j..=i {
                let r = lever(model, k, i);
                jac[(0, j)] -= r * theta[k].sin();
                jac[(1, j)] += r * theta[k].cos();
            }
        }
        jac
    }

    /// `d(com_jacobian(i)) / dq_m`.
    fn com_jacobian_derivative(
        model: &ManipulatorModel,
        theta: &[f64],
        i: usize,
        m: usize,
    ) -> Matrix {
        let n = model.n_links();
        let mut d = Matrix::zeros(2, n);
        if m > i {
            return d;
        }
        for j in 0..=i {
            for k in j.max(m)..=i {
                let r = lever(model, k, i);
                d[(0, j)] -= r * theta[k].cos();
                d[(1, j)] -= r * theta[k].sin();
            }
        }
        d
    }

    pub fn mass_matrix(model: &ManipulatorModel, q: &Vector) -> Matrix {
        let n = model.n_links();
        let theta = absolute_angles(q);
        let mut mass = Matrix::zeros(n, n);
        for i in 0..n {
            let jv = com_jacobian(model, &theta, i);
            mass += jv.transpose() * &jv * model.link_mass[i];
            // angular velocity of link i is the sum of q'_0..q'_i
            for r in 0..=i {
                for c in 0..=i {
                    mass[(r, c)] += model.link_inertia[i];
                }
            }
        }
        mass
    }

    /// `dM/dq_m` for every `m`.
    pub fn mass_matrix_partials(model: &ManipulatorModel, q: &Vector) -> Vec<Matrix> {
        let n = model.n_links();
        let theta = absolute_angles(q);
        let jacobians: Vec<Matrix> = (0..n).map(|i| com_jacobian(model, &theta, i)).collect();
        (0..n)
            .map(|m| {
                let mut dm = Matrix::zeros(n, n);
                for (i, jv) in jacobians.iter().enumerate() {
                    let djv = com_jacobian_derivative(model, &theta, i, m);
                    let sym = djv.transpose() * jv;
                    dm += (&sym + sym.transpose()) * model.link_mass[i];
                }
                dm
            })
            .collect()
    }

    /// Christoffel-symbol Coriolis matrix:
    /// `C[k][j] = sum_i 0.5 (dM[k][j]/dq_i + dM[k][i]/dq_j - dM[i][j]/dq_k) q'_i`.
    pub fn coriolis_matrix(model: &ManipulatorModel, q: &Vector, q_dot: &Vector) -> Matrix {
        let n = model.n_links();
        let dm = mass_matrix_partials(model, q);
        Matrix::from_fn(n, n, |k, j| {
            (0..n)
                .map(|i| 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * q_dot[i])
                .sum()
        })
    }

    pub fn gravity_vector(model: &ManipulatorModel, q: &Vector) -> Vector {
        let n = model.n_links();
        let theta = absolute_angles(q);
        let mut g = Vector::zeros(n);
        for i in 0..n {
            let jv = com_jacobian(model, &theta, i);
            for j in 0..n {
                g[j] += model.link_mass[i] * model.gravity * jv[(1, j)];
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn point_mass() -> ManipulatorModel {
        ManipulatorModel::new(
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            9.81,
        )
        .unwrap()
    }

    fn three_link() -> ManipulatorModel {
        ManipulatorModel::new(
            vec![1.5, 1.0, 0.5],
            vec![0.5, 0.4, 0.3],
            vec![0.2, 0.25, 0.1],
            vec![0.03, 0.02, 0.004],
            9.81,
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn point_mass_inertia_at_zero() {
        let m = mass_matrix(&point_mass(), &v(&[0.0, 0.0]));
        assert_relative_eq!(m, Matrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn point_mass_inertia_with_elbow_bent() {
        let m = mass_matrix(&point_mass(), &v(&[0.0, FRAC_PI_2]));
        assert_relative_eq!(m, Matrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn coriolis_vanishes_at_rest() {
        let model = ManipulatorModel::desk();
        let c = coriolis_matrix(&model, &v(&[0.3, -1.1]), &v(&[0.0, 0.0]));
        assert_eq!(c, Matrix::zeros(2, 2));
    }

    #[test]
    fn centrifugal_force_on_elbow() {
        let c = coriolis_matrix(&point_mass(), &v(&[0.0, FRAC_PI_2]), &v(&[1.0, 0.0]));
        let force = &c * v(&[1.0, 0.0]);
        assert_relative_eq!(force, v(&[0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn gravity_point_mass_horizontal() {
        let g = gravity_vector(&point_mass(), &v(&[0.0, 0.0]));
        assert_relative_eq!(g, v(&[29.43, 9.81]), epsilon = 1e-12);
    }

    #[test]
    fn gravity_hanging_down_is_equilibrium() {
        let g = gravity_vector(&point_mass(), &v(&[-FRAC_PI_2, 0.0]));
        assert!(g.norm() < 1e-14);
    }

    #[test]
    fn ee_jacobian_straight_arm() {
        let jac = ee_jacobian(&point_mass(), &v(&[0.0, 0.0]));
        assert_relative_eq!(jac, Matrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn closed_form_matches_assembly() {
        let model = ManipulatorModel::desk();
        for (q, qd) in [([0.1, -0.7], [1.0, 2.0]), ([2.0, 1.3], [-0.5, 0.25]), ([-1.0, 3.0], [3.0, -3.0])] {
            let (q, qd) = (v(&q), v(&qd));
            assert_relative_eq!(two_link::mass_matrix(&model, &q), assembled::mass_matrix(&model, &q), epsilon = 1e-10);
            assert_relative_eq!(
                two_link::coriolis_matrix(&model, &q, &qd),
                assembled::coriolis_matrix(&model, &q, &qd),
                epsilon = 1e-10
            );
            assert_relative_eq!(two_link::gravity_vector(&model, &q), assembled::gravity_vector(&model, &q), epsilon = 1e-10);
        }
    }

    #[test]
    fn three_link_inertia_is_spd() {
        let model = three_link();
        let m = mass_matrix(&model, &v(&[0.4, -0.9, 1.7]));
        assert_relative_eq!(m, m.transpose(), epsilon = 1e-14);
        assert!(m.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn forward_dynamics_at_equilibrium_is_zero() {
        let model = ManipulatorModel::desk().with_gravity(0.0);
        let state = JointState::at_rest(v(&[0.2, 0.5]));
        let acc = forward_dynamics(&model, &state, &Vector::zeros(2)).unwrap();
        assert_eq!(acc, Vector::zeros(2));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ManipulatorModel::new(vec![1.0], vec![1.0, 1.0], vec![0.5], vec![0.0], 9.81).is_err());
        assert!(ManipulatorModel::new(vec![0.0], vec![1.0], vec![0.5], vec![0.0], 9.81).is_err());
        assert!(ManipulatorModel::new(vec![1.0], vec![1.0], vec![1.5], vec![0.0], 9.81).is_err());
        assert!(ManipulatorModel::new(vec![1.0], vec![1.0], vec![0.5], vec![-1.0], 9.81).is_err());
        assert!(ManipulatorModel::desk().with_viscous_friction(-0.1).is_err());
    }
}
