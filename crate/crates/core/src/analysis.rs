//! Lyapunov monitoring and run statistics.
//!
//! For the parametrized tracking law the candidate
//!
//! ```text
//! V = 1/2 xi~'^T M_xi xi~' + 1/2 xi~^T Kp xi~
//! ```
//!
//! satisfies `V' = -xi~'^T Kd xi~'` along closed-loop solutions. The
//! simulator logs `V`; this module differentiates it numerically and
//! compares against the analytic rate.

use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{ControlGains, ControlLaw};
use crate::dynamics::{mass_matrix, ManipulatorModel};
use crate::error::{Error, Result};
use crate::parametrization::JointLimits;
use crate::simulation::{SimTrace, TraceRecord};
use crate::Vector;

/// Records at the start of a trace excluded from monotonicity checks.
pub const STARTUP_RECORDS: usize = 10;

/// Numeric `V'` may exceed zero by at most this fraction of `max V`.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-6;

/// Window at the end of a trace used for the `V' -> 0` tail statistic, s.
pub const TAIL_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub v: f64,
    pub v_dot_numeric: f64,
    pub v_dot_analytic: f64,
}

/// `V` at joint position `q` (for `M`) and `xi` (for `J`).
pub fn lyapunov_value(
    model: &ManipulatorModel,
    limits: &JointLimits,
    gains: &ControlGains,
    q: &Vector,
    xi: &Vector,
    xi_err: &Vector,
    xi_err_dot: &Vector,
) -> f64 {
    let jac = limits.jacobian(xi);
    let scaled = xi_err_dot.component_mul(&jac);
    let kinetic = 0.5 * scaled.dot(&(mass_matrix(model, q) * &scaled));
    let potential = 0.5 * xi_err.dot(&(&gains.kp * xi_err));
    kinetic + potential
}

/// `-xi~'^T Kd xi~'`.
pub fn lyapunov_rate(gains: &ControlGains, xi_err_dot: &Vector) -> f64 {
    -xi_err_dot.dot(&(&gains.kd * xi_err_dot))
}

/// `V` and both rates at a trace record. The numeric rate is the one stored
/// on the record (central difference over neighbours).
pub fn lyapunov(
    record: &TraceRecord,
    gains: &ControlGains,
    limits: &JointLimits,
    model: &ManipulatorModel,
) -> LyapunovSample {
    LyapunovSample {
        v: lyapunov_value(
            model,
            limits,
            gains,
            &record.q,
            &record.xi,
            &record.xi_err,
            &record.xi_err_dot,
        ),
        v_dot_numeric: record.v_dot_numeric,
        v_dot_analytic: lyapunov_rate(gains, &record.xi_err_dot),
    }
}

/// Central differences; endpoints (and neighbours of NaN) are NaN.
pub fn central_difference(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; values.len()];
    for k in 1..values.len().saturating_sub(1) {
        out[k] = (values[k + 1] - values[k - 1]) / (2.0 * dt);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayKind {
    /// Only `xi~` grows; `V` is the quadratic gain term.
    Error,
    /// Only `xi~'` grows with `xi` pinned at `base_xi` in every joint.
    ErrorRate { base_xi: f64 },
    /// Random direction in `(xi~, xi~')`.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayResult {
    pub kind: RayKind,
    /// `V` never decreases along the sampled radii.
    pub monotone: bool,
    /// `V` at the unit radius.
    pub v_unit: f64,
    /// Largest `V(s) / V(1)` over the samples.
    pub growth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProbeReport {
    pub radii: Vec<f64>,
    pub rays: Vec<RayResult>,
}

impl RadialProbeReport {
    /// Required growth factor over the unit-radius value.
    pub const GROWTH: f64 = 1e6;

    pub fn unbounded(&self) -> bool {
        self.rays.iter().all(|r| r.growth > Self::GROWTH)
    }

    /// Monotonicity on the axis rays (pure `xi~` and pure `xi~'`). Mixed
    /// rays can dip while `M_xi` collapses faster than the gain term grows.
    pub fn axis_rays_monotone(&self) -> bool {
        self.rays
            .iter()
            .filter(|r| !matches!(r.kind, RayKind::Mixed))
            .all(|r| r.monotone)
    }
}

/// Samples `V` along rays `s (a, b)` in `(xi~, xi~')` space with the
/// reference pinned (at the box center, or at `base_xi` for the
/// `ErrorRate` rays), for `s` log-spaced from 1 to 1e6.
///
/// The first rays are the axis cases; the remaining `ray_count` rays are
/// drawn from a fixed seed.
pub fn radial_unboundedness_probe(
    gains: &ControlGains,
    limits: &JointLimits,
    model: &ManipulatorModel,
    ray_count: usize,
) -> RadialProbeReport {
    let n = limits.n();
    let radii: Vec<f64> = (0..=120).map(|k| 10f64.powf(k as f64 / 20.0)).collect();
    let unit = |v: Vector| {
        let norm = v.norm();
        v / norm
    };
    let mut rays: Vec<(RayKind, Vector, Vector)> = vec![
        (RayKind::Error, unit(Vector::from_element(n, 1.0)), Vector::zeros(n)),
        (RayKind::ErrorRate { base_xi: 0.0 }, Vector::zeros(n), unit(Vector::from_element(n, 1.0))),
        (
            RayKind::ErrorRate { base_xi: 8.0 },
            Vector::zeros(n),
            unit(Vector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 })),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..ray_count {
        let raw = Vector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
        let raw = unit(raw);
        rays.push((RayKind::Mixed, raw.rows(0, n).into_owned(), raw.rows(n, n).into_owned()));
    }
    let results = rays
        .into_iter()
        .map(|(kind, a, b)| {
            let base = match kind {
                RayKind::ErrorRate { base_xi } => Vector::from_element(n, base_xi),
                _ => Vector::zeros(n),
            };
            let values: Vec<f64> = radii
                .iter()
                .map(|&s| {
                    let err = &a * s;
                    let err_dot = &b * s;
                    let xi = &base + &err;
                    let q = limits.q_of_xi(&xi);
                    lyapunov_value(model, limits, gains, &q, &xi, &err, &err_dot)
                })
                .collect();
            let monotone = values.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
            let v_unit = values[0];
            let growth = values.iter().fold(0.0f64, |m, v| m.max(v / v_unit));
            RayResult {
                kind,
                monotone,
                v_unit,
                growth,
            }
        })
        .collect();
    RadialProbeReport { radii, rays: results }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovStats {
    pub max_v: f64,
    /// Records past the startup window with `V'_numeric > tol * max V`.
    pub monotonicity_violations: usize,
    /// Largest `V'_numeric / max V` among those records (0 if none).
    pub worst_excess: f64,
    /// Largest analytic rate seen; never positive.
    pub max_v_dot_analytic: f64,
    /// `max |V'_numeric|` over the final second.
    pub tail_max_abs_v_dot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub law: ControlLaw,
    pub records: usize,
    pub final_time: f64,
    pub min_margin: Vector,
    pub violated: bool,
    /// Number of separate intervals during which some margin is `<= 0`.
    pub violation_episodes: usize,
    pub final_q_err: f64,
    pub final_xi_err: f64,
    pub final_xi_err_dot: f64,
    pub max_abs_torque: f64,
    pub saturated_records: usize,
    pub lyapunov: Option<LyapunovStats>,
    pub termination: Option<String>,
    pub left_feasible_space: bool,
    pub diverged: bool,
}

pub fn report(trace: &SimTrace, limits: &JointLimits) -> Result<RunReport> {
    let last = trace.records.last().ok_or(Error::EmptyTrace)?;
    let n = limits.n();
    let mut min_margin = Vector::from_element(n, f64::INFINITY);
    let mut episodes = 0;
    let mut inside_violation = false;
    for r in &trace.records {
        let m = limits.margins(&r.q);
        min_margin = min_margin.zip_map(&m, f64::min);
        let now = m.min() <= 0.0;
        if now && !inside_violation {
            episodes += 1;
        }
        inside_violation = now;
    }
    let max_abs_torque = trace
        .records
        .iter()
        .flat_map(|r| r.tau.iter())
        .filter(|x| x.is_finite())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let lyapunov = lyapunov_stats(trace);
    Ok(RunReport {
        law: trace.law,
        records: trace.records.len(),
        final_time: last.t,
        violated: min_margin.min() <= 0.0,
        min_margin,
        violation_episodes: episodes,
        final_q_err: (&last.q - &last.q_ref).norm(),
        final_xi_err: last.xi_err.norm(),
        final_xi_err_dot: last.xi_err_dot.norm(),
        max_abs_torque,
        saturated_records: trace.records.iter().filter(|r| r.saturated).count(),
        lyapunov,
        termination: trace.termination.as_ref().map(|t| t.error.to_string()),
        left_feasible_space: trace
            .termination
            .as_ref()
            .is_some_and(|t| t.error.is_out_of_feasible_space()),
        diverged: trace.diverged(),
    })
}

fn lyapunov_stats(trace: &SimTrace) -> Option<LyapunovStats> {
    let records = &trace.records;
    if !records.iter().any(|r| r.v.is_finite()) {
        return None;
    }
    let max_v = records
        .iter()
        .map(|r| r.v)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let threshold = MONOTONICITY_TOLERANCE * max_v;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for r in records.iter().skip(STARTUP_RECORDS + 1) {
        if r.v_dot_numeric > threshold {
            violations += 1;
            worst = worst.max(r.v_dot_numeric / max_v);
        }
    }
    let max_v_dot_analytic = records
        .iter()
        .map(|r| r.v_dot_analytic)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let end = records.last().map(|r| r.t).unwrap_or(0.0);
    let tail_max_abs_v_dot = records
        .iter()
        .filter(|r| r.t >= end - TAIL_WINDOW && r.v_dot_numeric.is_finite())
        .fold(0.0f64, |m, r| m.max(r.v_dot_numeric.abs()));
    Some(LyapunovStats {
        max_v,
        monotonicity_violations: violations,
        worst_excess: worst,
        max_v_dot_analytic,
        tail_max_abs_v_dot,
    })
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let deg: Vec<String> = self
            .min_margin
            .iter()
            .map(|m| format!("{:.4}", m.to_degrees()))
            .collect();
        let _ = writeln!(s, "law                    {}", self.law);
        let _ = writeln!(s, "records                {}", self.records);
        let _ = writeln!(s, "final time [s]         {:.4}", self.final_time);
        let _ = writeln!(s, "min margin [deg]       [{}]", deg.join(", "));
        let _ = writeln!(s, "limit violated         {}", self.violated);
        let _ = writeln!(s, "violation episodes     {}", self.violation_episodes);
        let _ = writeln!(s, "final |q~| [rad]       {:.6e}", self.final_q_err);
        let _ = writeln!(s, "final |xi~|            {:.6e}", self.final_xi_err);
        let _ = writeln!(s, "final |xi~'| [1/s]     {:.6e}", self.final_xi_err_dot);
        let _ = writeln!(s, "max |tau| [N m]        {:.4}", self.max_abs_torque);
        let _ = writeln!(s, "saturated records      {}", self.saturated_records);
        if let Some(l) = &self.lyapunov {
            let _ = writeln!(s, "max V [J]              {:.6e}", l.max_v);
            let _ = writeln!(s, "V' > tol records       {}", l.monotonicity_violations);
            let _ = writeln!(s, "worst V'/max V [1/s]   {:.3e}", l.worst_excess);
            let _ = writeln!(s, "max analytic V'        {:.3e}", l.max_v_dot_analytic);
            let _ = writeln!(s, "tail max |V'| [J/s]    {:.3e}", l.tail_max_abs_v_dot);
        }
        if let Some(t) = &self.termination {
            let _ = writeln!(s, "terminated             {t}");
        }
        s
    }

    pub fn csv_header(n: usize) -> String {
        let mut cols = vec!["law".to_string(), "records".into(), "final_time_s".into()];
        cols.extend((1..=n).map(|i| format!("min_margin{i}_rad")));
        cols.extend(
            [
                "violated",
                "violation_episodes",
                "final_q_err_rad",
                "final_xi_err",
                "final_xi_err_dot",
                "max_abs_torque_nm",
                "saturated_records",
                "max_v",
                "v_monotonicity_violations",
                "tail_max_abs_v_dot",
                "left_feasible_space",
                "diverged",
            ]
            .map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.law.to_string(), self.records.to_string(), format!("{}", self.final_time)];
        cols.extend(self.min_margin.iter().map(|m| format!("{m}")));
        let (max_v, mono, tail) = match &self.lyapunov {
            Some(l) => (
                format!("{}", l.max_v),
                l.monotonicity_violations.to_string(),
                format!("{}", l.tail_max_abs_v_dot),
            ),
            None => ("NaN".into(), String::new(), "NaN".into()),
        };
        cols.extend([
            self.violated.to_string(),
            self.violation_episodes.to_string(),
            format!("{}", self.final_q_err),
            format!("{}", self.final_xi_err),
            format!("{}", self.final_xi_err_dot),
            format!("{}", self.max_abs_torque),
            self.saturated_records.to_string(),
            max_v,
            mono,
            tail,
            self.left_feasible_space.to_string(),
            self.diverged.to_string(),
        ]);
        cols.join(",")
    }
}
