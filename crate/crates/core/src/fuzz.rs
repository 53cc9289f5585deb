//! Randomized closed-loop batches for the limit-invariance and convergence
//! checks.
//!
//! Every draw comes from one seeded ChaCha stream, so a spec always expands
//! to the same list of configurations.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{ControlGains, ControlLaw};
use crate::dynamics::JointState;
use crate::error::{Error, Result};
use crate::simulation::{ReferenceGenerator, SimConfig};
use crate::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzSpec {
    pub runs: usize,
    pub seed: u64,
    /// Initial `xi` and every reference `xi_d` stay within `±xi_bound`.
    pub xi_bound: f64,
    /// Initial `xi'` is drawn from `±xi_rate_bound`.
    pub xi_rate_bound: f64,
    /// Diagonal `Kp` entries, N·m.
    pub kp_range: [f64; 2],
    /// Diagonal `Kd` entries, N·m·s; the lower end must be positive.
    pub kd_range: [f64; 2],
    /// Share of runs tracking a sinusoid instead of a set point.
    pub sinusoid_fraction: f64,
    /// Sinusoid angular frequencies, rad/s.
    pub omega_range: [f64; 2],
}

impl FuzzSpec {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.runs == 0 {
            return Err(Error::InvalidConfig("fuzz.runs must be positive".into()));
        }
        if !(self.xi_bound > 0.0 && self.xi_bound.is_finite()) || !(self.xi_rate_bound >= 0.0) {
            return Err(Error::InvalidConfig("fuzz: xi bounds must be positive".into()));
        }
        if !(ordered(self.kp_range) && self.kp_range[0] > 0.0) {
            return Err(Error::InvalidConfig("fuzz.kp_range must be positive and ordered".into()));
        }
        if !(ordered(self.kd_range) && self.kd_range[0] > 0.0) {
            return Err(Error::InvalidConfig("fuzz.kd_range must be positive and ordered".into()));
        }
        if !(ordered(self.omega_range) && self.omega_range[0] >= 0.0) {
            return Err(Error::InvalidConfig("fuzz.omega_range must be nonnegative and ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.sinusoid_fraction) {
            return Err(Error::InvalidConfig("fuzz.sinusoid_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Expands `spec` into parametrized-law runs that share `base`'s model,
/// limits, step size, duration, integrator and torque limit.
pub fn fuzz_configs(base: &SimConfig, spec: &FuzzSpec) -> Vec<SimConfig> {
    let limits = &base.limits;
    let n = limits.n();
    let b = spec.xi_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.runs)
        .map(|_| {
            let xi0 = Vector::from_fn(n, |_, _| rng.random_range(-b..b));
            let xi_rate0 = Vector::from_fn(n, |_, _| draw(&mut rng, [-spec.xi_rate_bound, spec.xi_rate_bound]));
            let q0 = limits.q_of_xi(&xi0);
            let q_dot0 = limits.jacobian(&xi0).component_mul(&xi_rate0);
            let kp: Vec<f64> = (0..n).map(|_| draw(&mut rng, spec.kp_range)).collect();
            let kd: Vec<f64> = (0..n).map(|_| draw(&mut rng, spec.kd_range)).collect();
            let reference = if rng.random_bool(spec.sinusoid_fraction) {
                // peak |xi_d| = atanh(1 / r) <= b
                let r_min = 1.0 / b.tanh();
                ReferenceGenerator::Sinusoid {
                    rate_divisor: rng.random_range(r_min..2.0 * r_min),
                    omega: Vector::from_fn(n, |_, _| draw(&mut rng, spec.omega_range)),
                    rho: Vector::from_fn(n, |_, _| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                }
            } else {
                let xi_d = Vector::from_fn(n, |_, _| rng.random_range(-b..b));
                ReferenceGenerator::Constant {
                    q_d: limits.q_of_xi(&xi_d),
                }
            };
            let mut config = base.clone();
            config.initial = JointState::new(q0, q_dot0);
            config.controller.law = ControlLaw::Proposed;
            config.controller.gains = ControlGains::diagonal(&kp, &kd).expect("positive diagonal gains");
            config.reference = reference;
            config
        })
        .collect()
}
