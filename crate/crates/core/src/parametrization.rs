//! Bijection between the open joint box `Q = (q_min, q_max)` and the
//! unconstrained coordinates `xi`:
//!
//! ```text
//! q = q0 + delta * tanh(xi),   q0 = (q_max + q_min) / 2,   delta = (q_max - q_min) / 2
//! ```
//!
//! applied componentwise, together with its Jacobian and the dynamics
//! expressed in `xi`-coordinates.
//!
//! Every Jacobian here is diagonal, so it is carried as the vector of its
//! diagonal entries.

use crate::dynamics::DynamicsTerms;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Componentwise clamp on `xi`. `tanh(100)` is exactly 1.0 in double
/// precision, so the default only matters for overflow.
pub const DEFAULT_XI_SATURATION: f64 = 100.0;

/// Joint positions closer than this to a bound (rad) are rejected by
/// [`JointLimits::xi_of_q`].
pub const BOUNDARY_EPSILON: f64 = 1e-9;

/// Box limits on the joint coordinates, with the derived center and
/// half-range.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    q_min: Vector,
    q_max: Vector,
    center: Vector,
    half_range: Vector,
    xi_saturation: f64,
}

impl JointLimits {
    pub fn new(q_min: Vector, q_max: Vector) -> Result<Self> {
        if q_min.len() != q_max.len() {
            return Err(Error::DimensionMismatch {
                what: "joint limits",
                expected: q_min.len(),
                got: q_max.len(),
            });
        }
        if q_min.is_empty() {
            return Err(Error::InvalidLimits("no joints".into()));
        }
        for i in 0..q_min.len() {
            if !(q_min[i].is_finite() && q_max[i].is_finite()) {
                return Err(Error::InvalidLimits(format!("joint {i} limits must be finite")));
            }
            if q_max[i] - q_min[i] <= 0.0 {
                return Err(Error::InvalidLimits(format!(
                    "joint {i} has an empty free motion domain [{}, {}]",
                    q_min[i], q_max[i]
                )));
            }
        }
        let center = (&q_max + &q_min) * 0.5;
        let half_range = (&q_max - &q_min) * 0.5;
        Ok(Self {
            q_min,
            q_max,
            center,
            half_range,
            xi_saturation: DEFAULT_XI_SATURATION,
        })
    }

    pub fn from_degrees(min_deg: &[f64], max_deg: &[f64]) -> Result<Self> {
        let to_rad = |xs: &[f64]| Vector::from_iterator(xs.len(), xs.iter().map(|d| d.to_radians()));
        Self::new(to_rad(min_deg), to_rad(max_deg))
    }

    /// The hip/knee box of the reference experiments: `[-30, 85]` deg and
    /// `[-100, 0]` deg.
    pub fn hip_knee() -> Self {
        Self::from_degrees(&[-30.0, -100.0], &[85.0, 0.0]).expect("valid limits")
    }

    pub fn with_xi_saturation(mut self, saturation: f64) -> Result<Self> {
        if !(saturation.is_finite() && saturation > 0.0) {
            return Err(Error::InvalidLimits("xi saturation must be positive".into()));
        }
        self.xi_saturation = saturation;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.q_min.len()
    }

    pub fn q_min(&self) -> &Vector {
        &self.q_min
    }

    pub fn q_max(&self) -> &Vector {
        &self.q_max
    }

    /// `q0`
    pub fn center(&self) -> &Vector {
        &self.center
    }

    /// Diagonal of `delta`.
    pub fn half_range(&self) -> &Vector {
        &self.half_range
    }

    pub fn delta_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.half_range)
    }

    pub fn xi_saturation(&self) -> f64 {
        self.xi_saturation
    }

    /// Per-joint distance to the nearer bound; negative outside the box.
    pub fn margins(&self, q: &Vector) -> Vector {
        Vector::from_fn(self.n(), |i, _| (q[i] - self.q_min[i]).min(self.q_max[i] - q[i]))
    }

    pub fn min_margin(&self, q: &Vector) -> f64 {
        self.margins(q).min()
    }

    pub fn contains(&self, q: &Vector) -> bool {
        self.min_margin(q) > 0.0
    }

    /// Maps any finite `xi` strictly inside the box. Where `tanh` rounds to
    /// ±1 the result is pulled to the closest representable interior value.
    pub fn q_of_xi(&self, xi: &Vector) -> Vector {
        Vector::from_fn(self.n(), |i, _| {
            let q = self.center[i] + self.half_range[i] * xi[i].tanh();
            if q >= self.q_max[i] {
                self.q_max[i].next_down()
            } else if q <= self.q_min[i] {
                self.q_min[i].next_up()
            } else {
                q
            }
        })
    }

    /// Inverse map `atanh((q - q0) / delta)`, clamped to the saturation.
    pub fn xi_of_q(&self, q: &Vector) -> Result<Vector> {
        self.check_feasible(q)?;
        Ok(Vector::from_fn(self.n(), |i, _| {
            let x = (q[i] - self.center[i]) / self.half_range[i];
            x.atanh().clamp(-self.xi_saturation, self.xi_saturation)
        }))
    }

    pub fn check_feasible(&self, q: &Vector) -> Result<()> {
        if q.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "joint position",
                expected: self.n(),
                got: q.len(),
            });
        }
        for i in 0..self.n() {
            let inside = q[i] - self.q_min[i] >= BOUNDARY_EPSILON
                && self.q_max[i] - q[i] >= BOUNDARY_EPSILON;
            if !inside {
                return Err(Error::OutOfFeasibleSpace {
                    joint: i,
                    value: q[i],
                    min: self.q_min[i],
                    max: self.q_max[i],
                });
            }
        }
        Ok(())
    }

    /// Diagonal of `J(xi) = dq/dxi`, i.e. `delta_i * sech^2(xi_i)`.
    ///
    /// `sech^2` is evaluated without the `1 - tanh^2` cancellation so the
    /// entries stay positive up to `|xi| ~ 350`.
    pub fn jacobian(&self, xi: &Vector) -> Vector {
        Vector::from_fn(self.n(), |i, _| self.half_range[i] * sech2(xi[i]))
    }

    /// Diagonal of `dJ/dt = -2 delta tanh(xi) sech^2(xi) xi'`.
    pub fn jacobian_dot(&self, xi: &Vector, xi_dot: &Vector) -> Vector {
        Vector::from_fn(self.n(), |i, _| {
            -2.0 * self.half_range[i] * xi[i].tanh() * sech2(xi[i]) * xi_dot[i]
        })
    }

    /// `(xi, xi')` for a joint state inside the box.
    pub fn xi_state(&self, q: &Vector, q_dot: &Vector) -> Result<XiState> {
        let xi = self.xi_of_q(q)?;
        let jac = self.jacobian(&xi);
        let xi_dot = q_dot.component_div(&jac);
        Ok(XiState { xi, xi_dot })
    }
}

fn sech2(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Position and velocity in `xi`-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct XiState {
    pub xi: Vector,
    pub xi_dot: Vector,
}

/// Dynamics terms after the change of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct XiDynamicsTerms {
    pub m_xi: Matrix,
    pub c_xi: Matrix,
    pub g_xi: Vector,
    /// Diagonal of `J` at the state the terms were evaluated at.
    pub jacobian: Vector,
}

impl XiDynamicsTerms {
    /// `tau_xi = J^T tau`.
    pub fn tau_xi(&self, tau: &Vector) -> Vector {
        tau.component_mul(&self.jacobian)
    }
}

/// Transforms `(M, C, G)` evaluated at `q = q(xi)`, `q' = J xi'` into
///
/// ```text
/// M_xi = J^T M J,   C_xi = J^T (M J' + C J),   G_xi = J^T G
/// ```
pub fn to_xi_dynamics(terms: &DynamicsTerms, limits: &JointLimits, xi: &XiState) -> XiDynamicsTerms {
    let jac = limits.jacobian(&xi.xi);
    let jac_dot = limits.jacobian_dot(&xi.xi, &xi.xi_dot);
    let n = jac.len();
    let m_xi = Matrix::from_fn(n, n, |r, c| jac[r] * terms.m[(r, c)] * jac[c]);
    let c_xi = Matrix::from_fn(n, n, |r, c| {
        jac[r] * (terms.m[(r, c)] * jac_dot[c] + terms.c[(r, c)] * jac[c])
    });
    let g_xi = terms.g.component_mul(&jac);
    XiDynamicsTerms {
        m_xi,
        c_xi,
        g_xi,
        jacobian: jac,
    }
}
