//! Passivity-based torque laws.
//!
//! * [`classical_law`]: `tau = M qdd_d + C qd_d + G - Kp q~ - Kd q~'`
//! * [`xi_space_tracking_law`]: the same structure written for the
//!   `xi`-coordinate dynamics, output is `tau_xi`.
//! * [`parametrized_tracking_law`]: the joint torques that realize the
//!   `xi`-space law, `tau = J^{-T} tau_xi`.
//! * [`setpoint_law`]: gravity compensation with `-Kp' xi~ - Kd' q'`.
//!
//! None of the laws hold state; saturation is applied separately by
//! [`ControllerSpec::compute`].

use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use crate::dynamics::{coriolis_matrix, DynamicsTerms, JointState, ManipulatorModel};
use crate::error::{Error, Result};
use crate::parametrization::{to_xi_dynamics, JointLimits, XiDynamicsTerms, XiState};
use crate::{Matrix, Vector};

/// Proportional and derivative gains.
///
/// The same type carries q-space gains (N·m/rad, N·m·s/rad) and
/// `xi`-space gains (N·m, N·m·s); which one depends on the consuming law.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGains {
    pub kp: Matrix,
    pub kd: Matrix,
}

impl ControlGains {
    /// Validates `kp` symmetric positive definite and `kd` symmetric
    /// positive semidefinite.
    pub fn new(kp: Matrix, kd: Matrix) -> Result<Self> {
        let gains = Self { kp, kd };
        gains.validate()?;
        Ok(gains)
    }

    pub fn diagonal(kp: &[f64], kd: &[f64]) -> Result<Self> {
        if kp.len() != kd.len() {
            return Err(Error::DimensionMismatch {
                what: "damping gains",
                expected: kp.len(),
                got: kd.len(),
            });
        }
        Self::new(
            Matrix::from_diagonal(&Vector::from_row_slice(kp)),
            Matrix::from_diagonal(&Vector::from_row_slice(kd)),
        )
    }

    pub fn n(&self) -> usize {
        self.kp.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kp.nrows();
        for (name, k) in [("Kp", &self.kp), ("Kd", &self.kd)] {
            if k.nrows() != n || k.ncols() != n {
                return Err(Error::InvalidGains(format!("{name} must be {n}x{n}")));
            }
            if k.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGains(format!("{name} has non-finite entries")));
            }
            let scale = k.amax().max(1.0);
            if (k - k.transpose()).amax() > 1e-12 * scale {
                return Err(Error::InvalidGains(format!("{name} is not symmetric")));
            }
        }
        if self.kp.clone().cholesky().is_none() {
            return Err(Error::InvalidGains("Kp is not positive definite".into()));
        }
        let scale = self.kd.amax().max(1.0);
        if self.kd.clone().symmetric_eigenvalues().min() < -1e-12 * scale {
            return Err(Error::InvalidGains("Kd is not positive semidefinite".into()));
        }
        Ok(())
    }
}

/// Desired joint trajectory at one instant, with its image in
/// `xi`-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub q_d: Vector,
    pub q_d_dot: Vector,
    pub q_d_ddot: Vector,
    pub xi_d: Vector,
    pub xi_d_dot: Vector,
    pub xi_d_ddot: Vector,
}

impl ReferenceSample {
    /// Derives the `xi` triple by the chain rule:
    /// `xid' = J^{-1} qd'`, `xid'' = J^{-1} (qd'' - J' xid')`.
    pub fn new(limits: &JointLimits, q_d: Vector, q_d_dot: Vector, q_d_ddot: Vector) -> Result<Self> {
        if [q_d_dot.iter(), q_d_ddot.iter()].into_iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("reference derivatives must be finite".into()));
        }
        let xi_d = limits.xi_of_q(&q_d)?;
        let jac = limits.jacobian(&xi_d);
        let xi_d_dot = q_d_dot.component_div(&jac);
        let jac_dot = limits.jacobian_dot(&xi_d, &xi_d_dot);
        let xi_d_ddot = (&q_d_ddot - jac_dot.component_mul(&xi_d_dot)).component_div(&jac);
        Ok(Self {
            q_d,
            q_d_dot,
            q_d_ddot,
            xi_d,
            xi_d_dot,
            xi_d_ddot,
        })
    }

    pub fn constant(limits: &JointLimits, q_d: Vector) -> Result<Self> {
        let n = q_d.len();
        Self::new(limits, q_d, Vector::zeros(n), Vector::zeros(n))
    }
}

/// Tracking errors `xi~ = xi - xi_d` and `xi~' = J^{-1} q' - xid'`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiTrackingError {
    pub state: XiState,
    pub error: Vector,
    pub error_dot: Vector,
}

pub fn xi_tracking_error(
    limits: &JointLimits,
    state: &JointState,
    reference: &ReferenceSample,
) -> Result<XiTrackingError> {
    let xi_state = limits.xi_state(&state.q, &state.q_dot)?;
    let error = &xi_state.xi - &reference.xi_d;
    let error_dot = &xi_state.xi_dot - &reference.xi_d_dot;
    Ok(XiTrackingError {
        state: xi_state,
        error,
        error_dot,
    })
}

pub fn classical_law(
    terms: &DynamicsTerms,
    state: &JointState,
    reference: &ReferenceSample,
    gains: &ControlGains,
) -> Vector {
    let q_err = &state.q - &reference.q_d;
    let q_err_dot = &state.q_dot - &reference.q_d_dot;
    &terms.m * &reference.q_d_ddot + &terms.c * &reference.q_d_dot + &terms.g
        - &gains.kp * q_err
        - &gains.kd * q_err_dot
}

/// `tau_xi = M_xi xidd_d + C_xi xid_d + G_xi - Kp xi~ - Kd xi~'`.
pub fn xi_space_tracking_law(
    xi_terms: &XiDynamicsTerms,
    tracking: &XiTrackingError,
    reference: &ReferenceSample,
    gains: &ControlGains,
) -> Vector {
    &xi_terms.m_xi * &reference.xi_d_ddot + &xi_terms.c_xi * &reference.xi_d_dot + &xi_terms.g_xi
        - &gains.kp * &tracking.error
        - &gains.kd * &tracking.error_dot
}

/// Joint torques of the parametrized tracking law:
///
/// ```text
/// tau = M J xidd_d + (M J' + C J) xid_d + G - J^{-1} Kp xi~ - J^{-1} Kd xi~'
/// ```
pub fn parametrized_tracking_law(
    terms: &DynamicsTerms,
    state: &JointState,
    reference: &ReferenceSample,
    limits: &JointLimits,
    gains: &ControlGains,
) -> Result<Vector> {
    let tracking = xi_tracking_error(limits, state, reference)?;
    let xi = &tracking.state;
    let jac = limits.jacobian(&xi.xi);
    let jac_dot = limits.jacobian_dot(&xi.xi, &xi.xi_dot);
    let feedforward = &terms.m * jac.component_mul(&reference.xi_d_ddot)
        + &terms.m * jac_dot.component_mul(&reference.xi_d_dot)
        + &terms.c * jac.component_mul(&reference.xi_d_dot)
        + &terms.g;
    let feedback = (&gains.kp * &tracking.error + &gains.kd * &tracking.error_dot).component_div(&jac);
    Ok(feedforward - feedback)
}

/// `tau = G(q) - Kp' xi~ - Kd' q'`.
pub fn setpoint_law(
    terms: &DynamicsTerms,
    state: &JointState,
    q_d: &Vector,
    limits: &JointLimits,
    gains: &ControlGains,
) -> Result<Vector> {
    let xi = limits.xi_of_q(&state.q)?;
    let xi_d = limits.xi_of_q(q_d)?;
    Ok(&terms.g - &gains.kp * (xi - xi_d) - &gains.kd * &state.q_dot)
}

/// `Kp = J Kp'` and `Kd = J Kd' J` at the given `xi`. With these gains and a
/// set-point reference the parametrized tracking law reduces to
/// [`setpoint_law`] with `(Kp', Kd')`.
///
/// The result is not re-validated: for non-diagonal primed gains `J Kp'` is
/// not symmetric.
pub fn gain_transform(limits: &JointLimits, xi: &Vector, kp_prime: &Matrix, kd_prime: &Matrix) -> ControlGains {
    let jac = Matrix::from_diagonal(&limits.jacobian(xi));
    ControlGains {
        kp: &jac * kp_prime,
        kd: &jac * kd_prime * &jac,
    }
}

/// Componentwise clamp to `±limit`; reports whether any entry was clipped.
pub fn saturate(tau: &Vector, limit: f64) -> (Vector, bool) {
    let clipped = tau.map(|t| t.clamp(-limit, limit));
    let saturated = clipped != *tau;
    (clipped, saturated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlLaw {
    Classical,
    Proposed,
    Setpoint,
}

impl ControlLaw {
    pub const ALL: [ControlLaw; 3] = [ControlLaw::Classical, ControlLaw::Proposed, ControlLaw::Setpoint];

    pub fn name(self) -> &'static str {
        match self {
            ControlLaw::Classical => "classical",
            ControlLaw::Proposed => "proposed",
            ControlLaw::Setpoint => "setpoint",
        }
    }

    /// Whether the law is evaluated through `xi` and therefore needs the
    /// state strictly inside the joint box.
    pub fn uses_xi(self) -> bool {
        !matches!(self, ControlLaw::Classical)
    }
}

impl fmt::Display for ControlLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControlLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(ControlLaw::Classical),
            "proposed" => Ok(ControlLaw::Proposed),
            "setpoint" => Ok(ControlLaw::Setpoint),
            other => Err(Error::InvalidConfig(format!(
                "unknown law `{other}` (expected classical, proposed or setpoint)"
            ))),
        }
    }
}

/// Law selection plus everything needed to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    pub law: ControlLaw,
    pub gains: ControlGains,
    /// Componentwise torque clamp, N·m.
    pub torque_limit: f64,
    /// Use `C(q, qd_d) qd_d` (classical) or `C(q, J xid_d) J xid_d`
    /// (proposed) in place of the exact Coriolis feedforward.
    pub approx_coriolis_feedforward: bool,
}

/// Torques before and after saturation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub raw: Vector,
    pub applied: Vector,
    pub saturated: bool,
}

impl ControllerSpec {
    pub fn new(law: ControlLaw, gains: ControlGains) -> Self {
        Self {
            law,
            gains,
            torque_limit: 1000.0,
            approx_coriolis_feedforward: false,
        }
    }

    pub fn compute(
        &self,
        model: &ManipulatorModel,
        limits: &JointLimits,
        state: &JointState,
        reference: &ReferenceSample,
    ) -> Result<ControlOutput> {
        self.compute_with_terms(model, limits, state, reference, DynamicsTerms::at(model, state))
    }

    /// As [`compute`](Self::compute), reusing dynamics terms already
    /// evaluated at `state`.
    pub fn compute_with_terms(
        &self,
        model: &ManipulatorModel,
        limits: &JointLimits,
        state: &JointState,
        reference: &ReferenceSample,
        mut terms: DynamicsTerms,
    ) -> Result<ControlOutput> {
        let raw = match self.law {
            ControlLaw::Classical => {
                if self.approx_coriolis_feedforward {
                    terms.c = coriolis_matrix(model, &state.q, &reference.q_d_dot);
                }
                classical_law(&terms, state, reference, &self.gains)
            }
            ControlLaw::Proposed => {
                if self.approx_coriolis_feedforward {
                    let xi = limits.xi_of_q(&state.q)?;
                    let velocity = limits.jacobian(&xi).component_mul(&reference.xi_d_dot);
                    terms.c = coriolis_matrix(model, &state.q, &velocity);
                }
                parametrized_tracking_law(&terms, state, reference, limits, &self.gains)?
            }
            ControlLaw::Setpoint => setpoint_law(&terms, state, &reference.q_d, limits, &self.gains)?,
        };
        let (applied, saturated) = saturate(&raw, self.torque_limit);
        Ok(ControlOutput {
            raw,
            applied,
            saturated,
        })
    }
}

/// Evaluates the `xi`-space law at a joint state (used to cross-check the
/// joint-torque form).
pub fn xi_space_tracking_law_at(
    model: &ManipulatorModel,
    limits: &JointLimits,
    state: &JointState,
    reference: &ReferenceSample,
    gains: &ControlGains,
) -> Result<Vector> {
    let tracking = xi_tracking_error(limits, state, reference)?;
    let terms = DynamicsTerms::at(model, state);
    let xi_terms = to_xi_dynamics(&terms, limits, &tracking.state);
    Ok(xi_space_tracking_law(&xi_terms, &tracking, reference, gains))
}
