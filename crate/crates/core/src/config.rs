//! Experiment configuration (TOML) and its translation into runnable objects.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    AldanaLaw, AldanaParams, BasinLaw, BasinParams, Controller, InnerLaw, LinearLaw, PiecewiseController,
    PostSwitchLaw, SignMode, ZetaSchedule,
};
use crate::error::{Error, Result};
use crate::plant::{ChainPlant, DisturbanceSignal};
use crate::sim::{IntegratorSettings, Method, SettlingCriterion};
use crate::timebase::TimeBaseGain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// End of the simulation; defaults to `t0 + 1.05 * deadline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub initial_conditions: InitialConditions,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub settling: SettlingConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub n: usize,
    /// Disturbance bound `L`.
    #[serde(default)]
    pub bound: f64,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Sinusoid {
        amplitude: f64,
        /// Cycles per unit time.
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    Piecewise {
        #[serde(default)]
        t0: f64,
        t_c: f64,
        alpha: f64,
        #[serde(default)]
        eta_policy: EtaPolicy,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        inner: InnerConfig,
        post_switch: PostSwitchConfig,
    },
    /// `u = w(x)` applied directly to the plant state.
    Autonomous {
        #[serde(default)]
        t0: f64,
        /// Settling bound claimed for the law; defaults to its declared bound.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        claimed_bound: Option<f64>,
        inner: InnerConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaPolicy {
    /// `eta = 1 - exp(-alpha T_f)` from the inner law's settling bound.
    #[default]
    AutoFromTf,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignModeConfig {
    #[default]
    BoundaryLayer,
    Strict,
}

fn default_width() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerConfig {
    Linear {
        gains: Vec<f64>,
    },
    Basin {
        gains: Vec<f64>,
        rho: f64,
        eps1: f64,
        eps2: f64,
        t_bbf: f64,
    },
    Aldana {
        alpha1: f64,
        alpha2: f64,
        beta1: f64,
        beta2: f64,
        p: f64,
        q: f64,
        k: f64,
        tc1: f64,
        tc2: f64,
        zeta: ZetaConfig,
        #[serde(default)]
        sign_mode: SignModeConfig,
        #[serde(default = "default_width")]
        boundary_layer_width: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZetaConfig {
    Constant {
        value: f64,
    },
    /// `safety * (alpha T_c e^{-alpha tau} / eta)^2 L`; piecewise controllers only.
    Vanishing {
        #[serde(default = "one")]
        safety: f64,
    },
    Exponential {
        amplitude: f64,
        decay: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PostSwitchConfig {
    LinearFeedback {
        gains: Vec<f64>,
    },
    RobustSign {
        gains: Vec<f64>,
        surface: Vec<f64>,
        margin: f64,
        #[serde(default)]
        sign_mode: SignModeConfig,
        #[serde(default = "default_width")]
        boundary_layer_width: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    #[serde(default)]
    pub states: Vec<Vec<f64>>,
    /// Extra states drawn uniformly from `[-random_radius, random_radius]^n`.
    #[serde(default)]
    pub random_count: usize,
    #[serde(default = "one")]
    pub random_radius: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    #[default]
    Rk45,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    /// Fixed step for `rk4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_alignment: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SettlingConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Defaults to ten guard widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_convergence_window: Option<f64>,
    /// Relative to `max(1, |x0|_inf)`; defaults to 1e-4, or 1e-3 for
    /// discontinuous laws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaled_state_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Prefix for per-run trajectory CSVs; defaults to the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<String>,
    #[serde(default)]
    pub svg_log_scale: bool,
    /// Prefix for the verification report (`.txt` and `.csv`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

/// Integration tolerance presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToleranceProfile {
    Strict,
    Fast,
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub tolerance: Option<ToleranceProfile>,
    pub sign_mode: Option<SignModeConfig>,
}

/// A config translated into runnable objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub plant: ChainPlant,
    pub controller: Controller,
    pub initial_conditions: Vec<Vec<f64>>,
    pub settings: IntegratorSettings,
    pub criterion: SettlingCriterion,
    pub t0: f64,
    pub t_end: f64,
    /// `T_c` for piecewise designs, the claimed bound for autonomous ones.
    pub deadline: f64,
    pub verify: VerifyConfig,
    pub outputs: OutputsConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Schema checks that do not require building the objects.
    pub fn validate(&self) -> Result<()> {
        if let ControllerConfig::Piecewise { eta_policy, eta, .. } = &self.controller {
            match (eta_policy, eta) {
                (EtaPolicy::Explicit, None) => {
                    return Err(Error::Config("eta_policy = \"explicit\" requires eta".into()))
                }
                (EtaPolicy::AutoFromTf, Some(_)) => {
                    return Err(Error::Config(
                        "eta is only allowed with eta_policy = \"explicit\"".into(),
                    ))
                }
                _ => {}
            }
        }
        if self.initial_conditions.states.is_empty() && self.initial_conditions.random_count == 0 {
            return Err(Error::Config("at least one initial condition is required".into()));
        }
        Ok(())
    }

    pub fn build(&self, ov: Overrides) -> Result<Experiment> {
        self.validate()?;
        let n = self.plant.n;
        let plant = ChainPlant::new(n, self.plant.bound, build_disturbance(&self.plant.disturbance))
            .map_err(config_err)?;
        let (controller, deadline, t0) = build_controller(&self.controller, &plant, ov.sign_mode)?;
        let settings = build_settings(&self.integrator, ov.tolerance)?;
        let eps = self.settling.epsilon.unwrap_or(1e-6);
        let hold = self.settling.hold_duration.unwrap_or(0.01 * deadline);
        let criterion = SettlingCriterion::new(eps, hold).map_err(config_err)?;
        let t_end = self.t_end.unwrap_or(t0 + 1.05 * deadline);
        if !(t_end > t0) {
            return Err(Error::Config(format!("t_end = {t_end} must exceed t0 = {t0}")));
        }
        let initial_conditions = self.initial_conditions.generate(n)?;
        Ok(Experiment {
            name: self.name.clone(),
            plant,
            controller,
            initial_conditions,
            settings,
            criterion,
            t0,
            t_end,
            deadline,
            verify: self.verify.clone(),
            outputs: self.outputs.clone(),
        })
    }
}

impl InitialConditions {
    /// Listed states followed by the seeded random draws.
    pub fn generate(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        for s in &self.states {
            if s.len() != n {
                return Err(Error::Config(format!(
                    "initial condition {s:?} has {} entries, the plant has order {n}",
                    s.len()
                )));
            }
        }
        if !(self.random_radius > 0.0) {
            return Err(Error::Config("random_radius must be positive".into()));
        }
        let mut out = self.states.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_count {
            out.push(
                (0..n)
                    .map(|_| rng.random_range(-self.random_radius..=self.random_radius))
                    .collect(),
            );
        }
        Ok(out)
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn build_disturbance(d: &DisturbanceConfig) -> DisturbanceSignal {
    match d {
        DisturbanceConfig::Zero => DisturbanceSignal::Zero,
        DisturbanceConfig::Constant { value } => DisturbanceSignal::Constant(*value),
        DisturbanceConfig::Sinusoid {
            amplitude,
            frequency,
            phase,
        } => DisturbanceSignal::Sinusoid {
            amplitude: *amplitude,
            frequency: *frequency,
            phase: *phase,
        },
        DisturbanceConfig::Table { times, values } => DisturbanceSignal::Table {
            times: times.clone(),
            values: values.clone(),
        },
    }
}

fn sign_mode(cfg: SignModeConfig, width: f64, ov: Option<SignModeConfig>) -> SignMode {
    match ov.unwrap_or(cfg) {
        SignModeConfig::BoundaryLayer => SignMode::BoundaryLayer { width },
        SignModeConfig::Strict => SignMode::Strict,
    }
}

fn build_inner(
    cfg: &InnerConfig,
    gain: Option<&TimeBaseGain>,
    bound: f64,
    ov: Option<SignModeConfig>,
) -> Result<InnerLaw> {
    let law = match cfg {
        InnerConfig::Linear { gains } => InnerLaw::Linear(LinearLaw::new(gains.clone())?),
        InnerConfig::Basin {
            gains,
            rho,
            eps1,
            eps2,
            t_bbf,
        } => InnerLaw::Basin(BasinLaw::new(
            gains.clone(),
            BasinParams {
                rho: *rho,
                eps1: *eps1,
                eps2: *eps2,
                t_bbf: *t_bbf,
            },
        )?),
        InnerConfig::Aldana {
            alpha1,
            alpha2,
            beta1,
            beta2,
            p,
            q,
            k,
            tc1,
            tc2,
            zeta,
            sign_mode: mode,
            boundary_layer_width,
        } => {
            let params = AldanaParams {
                alpha1: *alpha1,
                alpha2: *alpha2,
                beta1: *beta1,
                beta2: *beta2,
                p: *p,
                q: *q,
                k: *k,
                tc1: *tc1,
                tc2: *tc2,
            };
            let zeta = match zeta {
                ZetaConfig::Constant { value } => ZetaSchedule::constant(*value),
                ZetaConfig::Exponential { amplitude, decay } => ZetaSchedule {
                    amplitude: *amplitude,
                    decay: *decay,
                },
                ZetaConfig::Vanishing { safety } => {
                    let g = gain.ok_or_else(|| {
                        Error::Config("zeta kind \"vanishing\" needs a piecewise controller".into())
                    })?;
                    ZetaSchedule::vanishing(g, bound, *safety)
                }
            };
            InnerLaw::Aldana(AldanaLaw::new(
                params,
                zeta,
                sign_mode(*mode, *boundary_layer_width, ov),
            )?)
        }
    };
    Ok(law)
}

/// The inner law's declared settling bound, without building the gain.
fn declared_bound(cfg: &InnerConfig) -> f64 {
    match cfg {
        InnerConfig::Linear { .. } => f64::INFINITY,
        InnerConfig::Basin { rho, t_bbf, .. } => t_bbf / rho,
        InnerConfig::Aldana { tc1, tc2, .. } => tc1 + tc2,
    }
}

fn build_controller(
    cfg: &ControllerConfig,
    plant: &ChainPlant,
    ov: Option<SignModeConfig>,
) -> Result<(Controller, f64, f64)> {
    let bound = plant.bound();
    let built = match cfg {
        ControllerConfig::Piecewise {
            t0,
            t_c,
            alpha,
            eta_policy,
            eta,
            inner,
            post_switch,
        } => {
            let gain = match eta_policy {
                EtaPolicy::AutoFromTf => TimeBaseGain::from_aux_bound(*alpha, declared_bound(inner), *t_c, *t0),
                EtaPolicy::Explicit => TimeBaseGain::new(*alpha, eta.unwrap_or(f64::NAN), *t_c, *t0),
            }
            .map_err(config_err)?;
            let inner = build_inner(inner, Some(&gain), bound, ov).map_err(config_err)?;
            let post = match post_switch {
                PostSwitchConfig::LinearFeedback { gains } => PostSwitchLaw::LinearFeedback { gains: gains.clone() },
                PostSwitchConfig::RobustSign {
                    gains,
                    surface,
                    margin,
                    sign_mode: mode,
                    boundary_layer_width,
                } => PostSwitchLaw::RobustSign {
                    gains: gains.clone(),
                    surface: surface.clone(),
                    margin: *margin,
                    bound,
                    sign_mode: sign_mode(*mode, *boundary_layer_width, ov),
                },
            };
            let c = PiecewiseController::new(gain, inner, post, bound).map_err(config_err)?;
            (Controller::Piecewise(c), *t_c, *t0)
        }
        ControllerConfig::Autonomous {
            t0,
            claimed_bound,
            inner,
        } => {
            let law = build_inner(inner, None, bound, ov).map_err(config_err)?;
            let deadline = claimed_bound.unwrap_or(law.settling_bound());
            if !(deadline > 0.0 && deadline.is_finite()) {
                return Err(Error::Config(
                    "autonomous controllers need a finite claimed_bound".into(),
                ));
            }
            (Controller::Autonomous { inner: law, t0: *t0 }, deadline, *t0)
        }
    };
    if built.0.order() != plant.order() {
        return Err(Error::Config(format!(
            "controller order {} does not match plant order {}",
            built.0.order(),
            plant.order()
        )));
    }
    Ok(built)
}

fn build_settings(cfg: &IntegratorConfig, profile: Option<ToleranceProfile>) -> Result<IntegratorSettings> {
    let mut s = IntegratorSettings::fast();
    let (mut rtol, mut atol) = (cfg.rtol.unwrap_or(1e-6), cfg.atol.unwrap_or(1e-9));
    match profile {
        Some(ToleranceProfile::Strict) => (rtol, atol) = (1e-9, 1e-12),
        Some(ToleranceProfile::Fast) => (rtol, atol) = (1e-6, 1e-9),
        None => {}
    }
    s.method = match cfg.method {
        MethodConfig::Rk45 => Method::Rk45Adaptive {
            rtol,
            atol,
            h_min: cfg.h_min.unwrap_or(1e-14),
            h_max: cfg.h_max.unwrap_or(f64::INFINITY),
        },
        MethodConfig::Rk4 => Method::Rk4Fixed {
            step: cfg
                .step
                .ok_or_else(|| Error::Config("method = \"rk4\" requires step".into()))?,
        },
    };
    if let Some(g) = cfg.guard_epsilon {
        s.guard_epsilon = g;
    }
    if let Some(a) = cfg.switch_alignment {
        s.switch_alignment = a;
    }
    if let Some(r) = cfg.record_every {
        s.record_every = r;
    }
    if let Some(m) = cfg.max_steps {
        s.max_steps = m;
    }
    s.validate().map_err(config_err)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "demo"

[plant]
n = 2

[controller]
kind = "piecewise"
t_c = 5.0
alpha = 1.0

[controller.inner]
kind = "linear"
gains = [7.0, 12.0]

[controller.post_switch]
kind = "linear_feedback"
gains = [1.0, 2.0]

[initial_conditions]
states = [[1.0, 0.0]]
"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let exp = cfg.build(Overrides::default()).unwrap();
        assert_eq!(exp.deadline, 5.0);
        assert_eq!(exp.t_end, 5.25);
        assert!(exp.controller.gain().unwrap().is_singular());
        assert_eq!(exp.criterion.hold_duration, 0.05);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_fail_with_location() {
        let bad = MINIMAL.replace("alpha = 1.0", "alpha = 1.0\nalpah = 2.0");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("alpah"), "{err}");
        assert!(err.contains("line"), "{err}");
        let bad_inner = MINIMAL.replace("gains = [7.0, 12.0]", "gains = [7.0, 12.0]\nrho = 2.0");
        assert!(ExperimentConfig::from_toml(&bad_inner).is_err());
    }

    #[test]
    fn eta_policy_consistency() {
        let bad = MINIMAL.replace("alpha = 1.0", "alpha = 1.0\neta = 0.5");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let ok = MINIMAL.replace("alpha = 1.0", "alpha = 1.0\neta_policy = \"explicit\"\neta = 0.5");
        let exp = ExperimentConfig::from_toml(&ok).unwrap().build(Overrides::default()).unwrap();
        assert_eq!(exp.controller.gain().unwrap().eta(), 0.5);
    }

    #[test]
    fn order_mismatch_is_a_config_error() {
        let bad = MINIMAL.replace("n = 2", "n = 3");
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(matches!(cfg.build(Overrides::default()), Err(Error::Config(_))));
    }

    #[test]
    fn random_initial_conditions_are_seeded() {
        let ic = InitialConditions {
            states: vec![],
            random_count: 3,
            random_radius: 10.0,
            seed: 42,
        };
        let a = ic.generate(2).unwrap();
        assert_eq!(a, ic.generate(2).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().flatten().all(|v| v.abs() <= 10.0));
    }

    #[test]
    fn tolerance_profiles_override() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let exp = cfg
            .build(Overrides {
                tolerance: Some(ToleranceProfile::Strict),
                sign_mode: None,
            })
            .unwrap();
        assert_eq!(
            exp.settings.method,
            Method::Rk45Adaptive {
                rtol: 1e-9,
                atol: 1e-12,
                h_min: 1e-14,
                h_max: f64::INFINITY
            }
        );
    }
}
