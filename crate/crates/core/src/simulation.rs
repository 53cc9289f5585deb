//! Fixed-step closed-loop simulation of the manipulator under one of the
//! control laws.
//!
//! The plant is always integrated in joint coordinates; the `xi`-coordinates
//! only exist inside the controller. Limit avoidance is therefore observed,
//! not imposed by the simulator.

use rayon::prelude::*;
use serde::Deserialize;

use crate::analysis;
use crate::control::{ControlLaw, ControlOutput, ControllerSpec, ReferenceSample};
use crate::dynamics::{ee_jacobian, forward_dynamics_with, DynamicsTerms, JointState, ManipulatorModel};
use crate::error::{Error, Result};
use crate::parametrization::JointLimits;
use crate::Vector;

/// Desired joint trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceGenerator {
    Constant { q_d: Vector },
    /// `q_d(t) = q0 + (delta / r) sin(omega t + rho)`, inside the box for
    /// every `t` when `r > 1`.
    Sinusoid {
        rate_divisor: f64,
        omega: Vector,
        rho: Vector,
    },
}

impl ReferenceGenerator {
    pub fn validate(&self, limits: &JointLimits) -> Result<()> {
        let n = limits.n();
        match self {
            ReferenceGenerator::Constant { q_d } => {
                check_len("constant reference", n, q_d.len())?;
                limits.check_feasible(q_d)
            }
            ReferenceGenerator::Sinusoid {
                rate_divisor,
                omega,
                rho,
            } => {
                check_len("reference omega", n, omega.len())?;
                check_len("reference rho", n, rho.len())?;
                if !(rate_divisor.is_finite() && *rate_divisor > 1.0) {
                    return Err(Error::InvalidConfig(
                        "sinusoid rate divisor must be greater than 1 to stay inside the limits".into(),
                    ));
                }
                if omega.iter().chain(rho.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::InvalidConfig("sinusoid parameters must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ReferenceGenerator::Constant { .. })
    }

    /// Reference and its analytic derivatives at time `t`.
    pub fn sample(&self, limits: &JointLimits, t: f64) -> Result<ReferenceSample> {
        match self {
            ReferenceGenerator::Constant { q_d } => ReferenceSample::constant(limits, q_d.clone()),
            ReferenceGenerator::Sinusoid {
                rate_divisor,
                omega,
                rho,
            } => {
                let n = limits.n();
                let amp = limits.half_range() / *rate_divisor;
                let phase = Vector::from_fn(n, |i, _| omega[i] * t + rho[i]);
                let q_d = limits.center() + amp.component_mul(&phase.map(f64::sin));
                let q_d_dot = Vector::from_fn(n, |i, _| amp[i] * omega[i] * phase[i].cos());
                let q_d_ddot = Vector::from_fn(n, |i, _| -amp[i] * omega[i] * omega[i] * phase[i].sin());
                ReferenceSample::new(limits, q_d, q_d_dot, q_d_ddot)
            }
        }
    }
}

/// External Cartesian force applied at the end effector.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalForceProfile {
    None,
    /// Magnitude `min(rate * (t - start_time), cap)` after `start_time`.
    Ramp {
        direction: [f64; 2],
        rate: f64,
        start_time: f64,
        cap: f64,
    },
}

impl ExternalForceProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExternalForceProfile::None => Ok(()),
            ExternalForceProfile::Ramp {
                direction,
                rate,
                start_time,
                cap,
            } => {
                let norm = direction[0].hypot(direction[1]);
                if !((norm - 1.0).abs() < 1e-9) {
                    return Err(Error::InvalidConfig("force direction must be a unit vector".into()));
                }
                if !(rate.is_finite() && *rate >= 0.0 && cap.is_finite() && *cap >= 0.0) {
                    return Err(Error::InvalidConfig("force rate and cap must be nonnegative".into()));
                }
                if !(start_time.is_finite() && *start_time >= 0.0) {
                    return Err(Error::InvalidConfig("force start time must be nonnegative".into()));
                }
                Ok(())
            }
        }
    }

    pub fn magnitude_at(&self, t: f64) -> f64 {
        match self {
            ExternalForceProfile::None => 0.0,
            ExternalForceProfile::Ramp {
                rate,
                start_time,
                cap,
                ..
            } => {
                if t <= *start_time {
                    0.0
                } else {
                    (rate * (t - start_time)).min(*cap)
                }
            }
        }
    }

    pub fn force_at(&self, t: f64) -> [f64; 2] {
        match self {
            ExternalForceProfile::None => [0.0, 0.0],
            ExternalForceProfile::Ramp { direction, .. } => {
                let m = self.magnitude_at(t);
                [m * direction[0], m * direction[1]]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Rk4,
    SemiImplicitEuler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub initial: JointState,
    pub model: ManipulatorModel,
    pub limits: JointLimits,
    pub controller: ControllerSpec,
    pub reference: ReferenceGenerator,
    pub force: ExternalForceProfile,
    pub integrator: Integrator,
}

impl SimConfig {
    /// Number of integration steps; the trace holds one more record.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.n_links();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidConfig("duration must be nonnegative".into()));
        }
        check_len("joint limits", n, self.limits.n())?;
        check_len("initial q", n, self.initial.q.len())?;
        check_len("initial q_dot", n, self.initial.q_dot.len())?;
        check_len("gains", n, self.controller.gains.n())?;
        if !self.initial.is_finite() {
            return Err(Error::InvalidConfig("initial state must be finite".into()));
        }
        if !(self.controller.torque_limit > 0.0) {
            return Err(Error::InvalidConfig("torque limit must be positive".into()));
        }
        self.controller.gains.validate()?;
        self.reference.validate(&self.limits)?;
        self.force.validate()?;
        if self.controller.law.uses_xi() {
            self.limits.check_feasible(&self.initial.q)?;
        }
        Ok(())
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

/// Closed-loop acceleration at `(state, t)` together with the control
/// torques and external force that produced it.
pub struct ClosedLoop {
    pub q_ddot: Vector,
    pub reference: ReferenceSample,
    pub control: ControlOutput,
    pub force: [f64; 2],
}

pub fn closed_loop(config: &SimConfig, state: &JointState, t: f64) -> Result<ClosedLoop> {
    let reference = config.reference.sample(&config.limits, t)?;
    let terms = DynamicsTerms::at(&config.model, state);
    let control = config.controller.compute_with_terms(
        &config.model,
        &config.limits,
        state,
        &reference,
        terms.clone(),
    )?;
    let force = config.force.force_at(t);
    let mut torque = control.applied.clone();
    if force != [0.0, 0.0] {
        let jac = ee_jacobian(&config.model, &state.q);
        torque += jac.transpose() * Vector::from_row_slice(&force);
    }
    let q_ddot = forward_dynamics_with(&config.model, state, &terms, &torque)?;
    if q_ddot.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalDivergence);
    }
    Ok(ClosedLoop {
        q_ddot,
        reference,
        control,
        force,
    })
}

/// Advances the state by one `dt`.
pub fn step(config: &SimConfig, state: &JointState, t: f64) -> Result<JointState> {
    step_from(config, state, t, None)
}

/// [`step`] with the closed-loop acceleration at `(state, t)` supplied when
/// the caller already has it.
fn step_from(config: &SimConfig, state: &JointState, t: f64, q_ddot: Option<Vector>) -> Result<JointState> {
    let accel = |s: &JointState, tt: f64| closed_loop(config, s, tt).map(|cl| cl.q_ddot);
    config.integrator.step(state, t, config.dt, q_ddot, accel)
}

impl Integrator {
    /// One step of `q'' = accel(state, t)`. `first` is `accel(state, t)`
    /// if the caller already evaluated it. A non-finite result is reported
    /// as divergence.
    pub fn step<F>(self, state: &JointState, t: f64, dt: f64, first: Option<Vector>, mut accel: F) -> Result<JointState>
    where
        F: FnMut(&JointState, f64) -> Result<Vector>,
    {
        if !state.is_finite() {
            return Err(Error::NumericalDivergence);
        }
        let first = match first {
            Some(a) => a,
            None => accel(state, t)?,
        };
        let next = match self {
            Integrator::SemiImplicitEuler => {
                let q_dot = &state.q_dot + first * dt;
                let q = &state.q + &q_dot * dt;
                JointState { q, q_dot }
            }
            Integrator::Rk4 => {
                let offset = |k: &(Vector, Vector), h: f64| JointState {
                    q: &state.q + &k.0 * h,
                    q_dot: &state.q_dot + &k.1 * h,
                };
                let mut deriv = |s: JointState, tt: f64| -> Result<(Vector, Vector)> {
                    let a = accel(&s, tt)?;
                    Ok((s.q_dot, a))
                };
                let k1 = (state.q_dot.clone(), first);
                let k2 = deriv(offset(&k1, dt / 2.0), t + dt / 2.0)?;
                let k3 = deriv(offset(&k2, dt / 2.0), t + dt / 2.0)?;
                let k4 = deriv(offset(&k3, dt), t + dt)?;
                JointState {
                    q: &state.q + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * (dt / 6.0),
                    q_dot: &state.q_dot + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * (dt / 6.0),
                }
            }
        };
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::NumericalDivergence)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    /// The step leaving this record produced a non-finite state.
    Diverged,
    /// The controller could not be evaluated at (or right after) this
    /// record because the state left the joint box.
    LeftFeasibleSpace,
}

impl RecordStatus {
    pub fn name(self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Diverged => "diverged",
            RecordStatus::LeftFeasibleSpace => "left_feasible_space",
        }
    }
}

/// One logged instant. Quantities that are undefined at the record (e.g.
/// `xi` outside the box, `V` for laws without a Lyapunov function) are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub q: Vector,
    pub q_dot: Vector,
    pub q_ref: Vector,
    pub xi: Vector,
    pub xi_err: Vector,
    pub xi_err_dot: Vector,
    pub tau_raw: Vector,
    pub tau: Vector,
    pub saturated: bool,
    pub force: [f64; 2],
    pub v: f64,
    pub v_dot_numeric: f64,
    pub v_dot_analytic: f64,
    pub margin: Vector,
    pub status: RecordStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Termination {
    pub t: f64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub law: ControlLaw,
    pub dt: f64,
    pub records: Vec<TraceRecord>,
    pub termination: Option<Termination>,
}

impl SimTrace {
    pub fn completed(&self) -> bool {
        self.termination.is_none()
    }

    pub fn diverged(&self) -> bool {
        self.termination.as_ref().is_some_and(|t| t.error.is_divergence())
    }

    pub fn min_margin(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.margin.min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Limit violated at some record, or the run stopped because the state
    /// left the joint box.
    pub fn violated(&self) -> bool {
        self.min_margin() <= 0.0
            || self
                .termination
                .as_ref()
                .is_some_and(|t| t.error.is_out_of_feasible_space())
    }
}

fn nan_vector(n: usize) -> Vector {
    Vector::from_element(n, f64::NAN)
}

/// Builds the record at `(state, t)`; on success also returns the
/// closed-loop acceleration there, which is the first RK4 stage.
fn make_record(config: &SimConfig, state: &JointState, t: f64) -> (TraceRecord, Result<Vector>) {
    let n = state.q.len();
    let limits = &config.limits;
    let margin = limits.margins(&state.q);
    let mut record = TraceRecord {
        t,
        q: state.q.clone(),
        q_dot: state.q_dot.clone(),
        q_ref: nan_vector(n),
        xi: nan_vector(n),
        xi_err: nan_vector(n),
        xi_err_dot: nan_vector(n),
        tau_raw: nan_vector(n),
        tau: nan_vector(n),
        saturated: false,
        force: config.force.force_at(t),
        v: f64::NAN,
        v_dot_numeric: f64::NAN,
        v_dot_analytic: f64::NAN,
        margin,
        status: RecordStatus::Ok,
    };
    let reference = match config.reference.sample(limits, t) {
        Ok(r) => r,
        Err(e) => return (record, Err(e)),
    };
    record.q_ref = reference.q_d.clone();
    if let Ok(tracking) = crate::control::xi_tracking_error(limits, state, &reference) {
        record.xi = tracking.state.xi.clone();
        if config.controller.law == ControlLaw::Proposed {
            let gains = &config.controller.gains;
            record.v = analysis::lyapunov_value(
                &config.model,
                limits,
                gains,
                &state.q,
                &tracking.state.xi,
                &tracking.error,
                &tracking.error_dot,
            );
            record.v_dot_analytic = analysis::lyapunov_rate(gains, &tracking.error_dot);
        }
        record.xi_err = tracking.error;
        record.xi_err_dot = tracking.error_dot;
    }
    let status = match closed_loop(config, state, t) {
        Ok(cl) => {
            record.tau_raw = cl.control.raw;
            record.tau = cl.control.applied;
            record.saturated = cl.control.saturated;
            Ok(cl.q_ddot)
        }
        Err(e) => Err(e),
    };
    (record, status)
}

fn status_for(error: &Error) -> RecordStatus {
    if error.is_out_of_feasible_space() {
        RecordStatus::LeftFeasibleSpace
    } else {
        RecordStatus::Diverged
    }
}

/// Runs the configured experiment. Configuration problems (including an
/// initial state or reference outside the box for the `xi`-space laws) are
/// returned as errors; failures after the first step end the trace early
/// with a flagged last record and a [`Termination`].
pub fn run(config: &SimConfig) -> Result<SimTrace> {
    config.validate()?;
    let steps = config.steps();
    let mut records = Vec::with_capacity(steps + 1);
    let mut termination = None;
    let mut state = config.initial.clone();
    for k in 0..=steps {
        let t = k as f64 * config.dt;
        let (mut record, status) = make_record(config, &state, t);
        let q_ddot = match status {
            Ok(a) => a,
            Err(e) => {
                if k == 0 {
                    return Err(e);
                }
                record.status = status_for(&e);
                records.push(record);
                termination = Some(Termination { t, error: e.at(t) });
                break;
            }
        };
        records.push(record);
        if k == steps {
            break;
        }
        match step_from(config, &state, t, Some(q_ddot)) {
            Ok(next) => state = next,
            Err(e) => {
                if let Some(last) = records.last_mut() {
                    last.status = status_for(&e);
                }
                termination = Some(Termination { t, error: e.at(t) });
                break;
            }
        }
    }
    let v_dot = analysis::central_difference(
        &records.iter().map(|r| r.v).collect::<Vec<_>>(),
        config.dt,
    );
    for (record, d) in records.iter_mut().zip(v_dot) {
        record.v_dot_numeric = d;
    }
    Ok(SimTrace {
        law: config.controller.law,
        dt: config.dt,
        records,
        termination,
    })
}

/// Runs independent configurations concurrently, preserving order.
pub fn run_batch(configs: &[SimConfig]) -> Vec<Result<SimTrace>> {
    configs.par_iter().map(run).collect()
}

/// Outcome of a breaking-force search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BreakingForce {
    /// Smallest capped ramp magnitude (N) that drives a joint to its limit.
    Broke(f64),
    /// No violation up to the ramp cap; the breaking force is at least `cap`.
    NoBreak { cap: f64 },
}

impl BreakingForce {
    /// The breaking force, or its lower bound when nothing broke.
    pub fn value(self) -> f64 {
        match self {
            BreakingForce::Broke(f) => f,
            BreakingForce::NoBreak { cap } => cap,
        }
    }
}

/// Bisection settings for [`force_ramp_experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSearch {
    /// Time the force is held at its cap after the ramp ends, s.
    pub hold: f64,
    /// Bisection stops when the bracket is narrower than this, N.
    pub tolerance: f64,
}

impl Default for RampSearch {
    fn default() -> Self {
        Self {
            hold: 5.0,
            tolerance: 0.5,
        }
    }
}

/// Breaking force of the configured law: the smallest ramp cap for which a
/// capped ramp run reaches a joint limit (or diverges), found by bisection
/// between 0 and the profile cap.
pub fn force_ramp_experiment(config: &SimConfig, search: RampSearch) -> Result<BreakingForce> {
    let ExternalForceProfile::Ramp {
        direction,
        rate,
        start_time,
        cap,
    } = config.force
    else {
        return Err(Error::InvalidConfig("breaking-force search needs a ramp force profile".into()));
    };
    if !config.reference.is_constant() {
        return Err(Error::InvalidConfig("breaking-force search needs a constant reference".into()));
    }
    if !(rate > 0.0) {
        return Err(Error::InvalidConfig("breaking-force search needs a positive ramp rate".into()));
    }
    config.validate()?;
    let breaks = |c: f64| -> Result<bool> {
        let mut probe = config.clone();
        probe.force = ExternalForceProfile::Ramp {
            direction,
            rate,
            start_time,
            cap: c,
        };
        probe.duration = start_time + c / rate + search.hold;
        let trace = run(&probe)?;
        Ok(trace.violated() || trace.diverged())
    };
    if !breaks(cap)? {
        return Ok(BreakingForce::NoBreak { cap });
    }
    let (mut lo, mut hi) = (0.0, cap);
    if breaks(lo)? {
        return Ok(BreakingForce::Broke(0.0));
    }
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        if breaks(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BreakingForce::Broke(hi))
}

/// Breaking forces of several laws on the same configuration, searched
/// concurrently.
pub fn compare_breaking_forces(
    config: &SimConfig,
    laws: &[ControlLaw],
    search: RampSearch,
) -> Vec<(ControlLaw, Result<BreakingForce>)> {
    laws.par_iter()
        .map(|&law| {
            let mut c = config.clone();
            c.controller.law = law;
            (law, force_ramp_experiment(&c, search))
        })
        .collect()
}
