//! Experiment configuration files.
//!
//! Configs are TOML. Angles are in degrees (converted to radians here),
//! everything else is SI. Unknown keys are rejected. See `presets/` for
//! the shipped experiments and `docs/config.md` for the full schema.

use serde::Deserialize;

use crate::control::{ControlGains, ControlLaw, ControllerSpec};
use crate::dynamics::{JointState, ManipulatorModel};
use crate::error::{Error, Result};
use crate::fuzz::FuzzSpec;
use crate::parametrization::{JointLimits, DEFAULT_XI_SATURATION};
use crate::simulation::{ExternalForceProfile, Integrator, RampSearch, ReferenceGenerator, SimConfig};
use crate::Vector;

pub const PRESETS: [(&str, &str); 4] = [
    ("exp1_setpoint", include_str!("../presets/exp1_setpoint.toml")),
    ("exp2_sinusoid", include_str!("../presets/exp2_sinusoid.toml")),
    ("exp3_force", include_str!("../presets/exp3_force.toml")),
    ("fuzz_invariance", include_str!("../presets/fuzz_invariance.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_law")]
    pub law: ControlLaw,
    /// Laws run side by side by `compare`.
    #[serde(default)]
    pub compare_laws: Vec<ControlLaw>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    pub limits: LimitsSection,
    pub initial: InitialSection,
    pub reference: ReferenceSection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub force: ForceSection,
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub search: SearchSection,
    pub fuzz: Option<FuzzSection>,
}

fn default_law() -> ControlLaw {
    ControlLaw::Proposed
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub com_offsets: Vec<f64>,
    pub inertias: Vec<f64>,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default)]
    pub viscous_friction: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl Default for ModelSection {
    fn default() -> Self {
        let desk = ManipulatorModel::desk();
        Self {
            masses: desk.link_mass().to_vec(),
            lengths: desk.link_length().to_vec(),
            com_offsets: desk.com_offset().to_vec(),
            inertias: desk.link_inertia().to_vec(),
            gravity: desk.gravity(),
            viscous_friction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    pub min_deg: Vec<f64>,
    pub max_deg: Vec<f64>,
    #[serde(default = "default_xi_saturation")]
    pub xi_saturation: f64,
}

fn default_xi_saturation() -> f64 {
    DEFAULT_XI_SATURATION
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q_deg: Vec<f64>,
    #[serde(default)]
    pub q_dot_deg_s: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferenceSection {
    Constant {
        q_deg: Vec<f64>,
    },
    Sinusoid {
        rate_divisor: f64,
        omega_rad_s: Vec<f64>,
        rho_deg: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    /// Diagonal proportional gains.
    pub kp: Vec<f64>,
    /// Diagonal damping gains.
    pub kd: Vec<f64>,
    #[serde(default = "default_torque_limit")]
    pub torque_limit: f64,
    #[serde(default)]
    pub approx_coriolis_feedforward: bool,
}

fn default_torque_limit() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForceSection {
    #[default]
    None,
    Ramp {
        direction: [f64; 2],
        rate: f64,
        start_time: f64,
        cap: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_integrator() -> Integrator {
    Integrator::Rk4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "yes")]
    pub trace: bool,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            trace: true,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default = "default_hold")]
    pub hold: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_hold() -> f64 {
    RampSearch::default().hold
}

fn default_tolerance() -> f64 {
    RampSearch::default().tolerance
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            hold: default_hold(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzSection {
    pub runs: usize,
    pub xi_bound: f64,
    pub xi_rate_bound: f64,
    pub kp_range: [f64; 2],
    pub kd_range: [f64; 2],
    pub sinusoid_fraction: f64,
    pub omega_range: [f64; 2],
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.to_sim_config()?;
        if let Some(f) = &config.fuzz {
            f.to_spec(config.seed).validate()?;
        }
        Ok(config)
    }

    /// Reads a config from a path, or from the shipped presets when `source`
    /// names one and no such file exists.
    pub fn load(source: &str) -> Result<Self> {
        let path = std::path::Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            Self::from_toml_str(&text).map_err(|e| Error::InvalidConfig(format!("{source}: {}", strip(e))))
        } else if let Some(text) = preset(source) {
            Self::from_toml_str(text)
        } else {
            Err(Error::Io(format!("no config file or preset named `{source}`")))
        }
    }

    pub fn to_sim_config(&self) -> Result<SimConfig> {
        let ctx = |key: &'static str| move |e: Error| Error::InvalidConfig(format!("{key}: {}", strip(e)));
        let m = &self.model;
        let model = ManipulatorModel::new(
            m.masses.clone(),
            m.lengths.clone(),
            m.com_offsets.clone(),
            m.inertias.clone(),
            m.gravity,
        )
        .and_then(|model| model.with_viscous_friction(m.viscous_friction))
        .map_err(ctx("model"))?;
        let n = model.n_links();
        let limits = JointLimits::from_degrees(&self.limits.min_deg, &self.limits.max_deg)
            .and_then(|l| l.with_xi_saturation(self.limits.xi_saturation))
            .map_err(ctx("limits"))?;
        expect_len("limits.min_deg", n, limits.n())?;
        expect_len("initial.q_deg", n, self.initial.q_deg.len())?;
        let q0 = degrees(&self.initial.q_deg);
        let q_dot0 = match &self.initial.q_dot_deg_s {
            Some(v) => {
                expect_len("initial.q_dot_deg_s", n, v.len())?;
                degrees(v)
            }
            None => Vector::zeros(n),
        };
        let reference = match &self.reference {
            ReferenceSection::Constant { q_deg } => {
                expect_len("reference.q_deg", n, q_deg.len())?;
                ReferenceGenerator::Constant { q_d: degrees(q_deg) }
            }
            ReferenceSection::Sinusoid {
                rate_divisor,
                omega_rad_s,
                rho_deg,
            } => {
                expect_len("reference.omega_rad_s", n, omega_rad_s.len())?;
                expect_len("reference.rho_deg", n, rho_deg.len())?;
                ReferenceGenerator::Sinusoid {
                    rate_divisor: *rate_divisor,
                    omega: Vector::from_row_slice(omega_rad_s),
                    rho: degrees(rho_deg),
                }
            }
        };
        expect_len("controller.kp", n, self.controller.kp.len())?;
        expect_len("controller.kd", n, self.controller.kd.len())?;
        let gains = ControlGains::diagonal(&self.controller.kp, &self.controller.kd).map_err(ctx("controller"))?;
        let controller = ControllerSpec {
            law: self.law,
            gains,
            torque_limit: self.controller.torque_limit,
            approx_coriolis_feedforward: self.controller.approx_coriolis_feedforward,
        };
        let force = match &self.force {
            ForceSection::None => ExternalForceProfile::None,
            ForceSection::Ramp {
                direction,
                rate,
                start_time,
                cap,
            } => ExternalForceProfile::Ramp {
                direction: *direction,
                rate: *rate,
                start_time: *start_time,
                cap: *cap,
            },
        };
        let config = SimConfig {
            dt: self.sim.dt,
            duration: self.sim.duration,
            initial: JointState::new(q0, q_dot0),
            model,
            limits,
            controller,
            reference,
            force,
            integrator: self.sim.integrator,
        };
        // Reference and force problems are independent of the law; report
        // them with their own key before the law-specific checks.
        config.reference.validate(&config.limits).map_err(ctx("reference"))?;
        config.force.validate().map_err(ctx("force"))?;
        config.validate().map_err(ctx("config"))?;
        if !(self.search.hold >= 0.0 && self.search.tolerance > 0.0) {
            return Err(Error::InvalidConfig("search: hold must be >= 0 and tolerance > 0".into()));
        }
        Ok(config)
    }

    pub fn ramp_search(&self) -> RampSearch {
        RampSearch {
            hold: self.search.hold,
            tolerance: self.search.tolerance,
        }
    }

    pub fn fuzz_spec(&self) -> Option<FuzzSpec> {
        self.fuzz.as_ref().map(|f| f.to_spec(self.seed))
    }

    /// Laws for `compare`; defaults to classical against proposed.
    pub fn laws_to_compare(&self) -> Vec<ControlLaw> {
        if self.compare_laws.is_empty() {
            vec![ControlLaw::Classical, ControlLaw::Proposed]
        } else {
            self.compare_laws.clone()
        }
    }
}

impl FuzzSection {
    fn to_spec(&self, seed: u64) -> FuzzSpec {
        FuzzSpec {
            runs: self.runs,
            seed,
            xi_bound: self.xi_bound,
            xi_rate_bound: self.xi_rate_bound,
            kp_range: self.kp_range,
            kd_range: self.kd_range,
            sinusoid_fraction: self.sinusoid_fraction,
            omega_range: self.omega_range,
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::InvalidConfig(s) => s,
        other => other.to_string(),
    }
}

fn degrees(xs: &[f64]) -> Vector {
    Vector::from_iterator(xs.len(), xs.iter().map(|d| d.to_radians()))
}

fn expect_len(key: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{key}: expected {expected} entries (one per link), got {got}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[limits]
min_deg = [-30, -100]
max_deg = [85, 0]
[initial]
q_deg = [0, -50]
[reference]
kind = "constant"
q_deg = [10, -40]
[controller]
kp = [20, 10]
kd = [2, 1]
[sim]
duration = 1.0
"#;

    #[test]
    fn presets_parse() {
        for (name, text) in PRESETS {
            let cfg = ExperimentConfig::from_toml_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn minimal_config_uses_desk_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let sim = cfg.to_sim_config().unwrap();
        assert_eq!(sim.model, ManipulatorModel::desk());
        assert_eq!(sim.dt, 1e-3);
        assert_eq!(sim.controller.law, ControlLaw::Proposed);
        assert!((sim.limits.q_max()[0] - 85f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("duration = 1.0", "duration = 1.0\nstep = 2");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("step"), "{err}");
    }

    #[test]
    fn zero_width_limits_are_rejected() {
        let text = MINIMAL.replace("max_deg = [85, 0]", "max_deg = [85, -100]");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("limits"), "{err}");
    }

    #[test]
    fn infeasible_reference_is_rejected() {
        let text = MINIMAL.replace("q_deg = [10, -40]", "q_deg = [10, 5]");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("reference"), "{err}");
    }

    #[test]
    fn wrong_lengths_name_the_key() {
        let text = MINIMAL.replace("kp = [20, 10]", "kp = [20]");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("controller.kp"), "{err}");
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = ExperimentConfig::from_toml_str("name = \n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }
}
