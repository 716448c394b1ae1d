//! Particle-based sum-product algorithm for one panel.
//!
//! Messages on the agent state (prediction α, outgoing γ, final belief) are
//! all [`ParticleCloud`]s; anchor states are [`AnchorBelief`]s holding
//! amplitude particles plus a Bernoulli existence probability. Agent and
//! amplitude particles are paired index-by-index ("stacked" joint
//! particles), which keeps the measurement update linear in
//! `particles × (measurements + 1)`.

mod anchor;
mod cloud;
mod estimate;
mod init;
mod panel;
mod predict;
mod resample;
mod update;

pub use anchor::{anchors_for_panel, AnchorBelief, AnchorGeom, AnchorKind};
pub use cloud::{AgentState, ParticleCloud};
pub use estimate::{mmse_estimates, Estimates};
pub use init::{initial_cloud, redraw_velocity};
pub use panel::{AgentInput, PanelFilter, PanelStep};
pub use predict::{inter_panel_predict, predict_agent, predict_anchor};
pub use resample::{resample_regularize, systematic_indices};
pub use update::{
    existence_update, log_pda_likelihood, measurement_update, pda_likelihood, PdaContext,
    UpdateOutput,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which paths the filter exploits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Line-of-sight paths to the physical anchors only.
    #[default]
    Los,
    /// Line-of-sight plus single-bounce paths via known virtual anchors.
    Mpc,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "los" => Ok(Mode::Los),
            "mpc" => Ok(Mode::Mpc),
            other => Err(Error::invalid(format!("unknown mode '{other}' (expected los|mpc)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Los => "los",
            Mode::Mpc => "mpc",
        })
    }
}

/// Near-constant-velocity agent dynamics plus the inter-panel
/// regularization noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub dt: f64,
    /// Acceleration noise std, m/s².
    pub sigma_acc: f64,
    /// Position jitter applied when a message hops to the next panel, m.
    pub sigma_reg: f64,
}

impl MotionModel {
    pub fn new(dt: f64, params: &MotionParams) -> Self {
        Self {
            dt,
            sigma_acc: params.sigma_acc,
            sigma_reg: params.sigma_reg,
        }
    }
}

/// Serialized part of [`MotionModel`]; the step length comes from the
/// scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionParams {
    pub sigma_acc: f64,
    pub sigma_reg: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            sigma_acc: 1.5,
            sigma_reg: 0.005,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_acc > 0.0) {
            return Err(Error::config("sigma_acc", "sigma_acc must be positive"));
        }
        if !(self.sigma_reg > 0.0) {
            return Err(Error::config("sigma_reg", "sigma_reg must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaConfig {
    pub n_particles: usize,
    /// Existence probability above which an anchor counts as detected.
    pub p_de: f64,
    pub mode: Mode,
    pub p_survive: f64,
    pub p_birth: f64,
    /// Amplitude range of newborn line-of-sight paths.
    pub birth_u_min: f64,
    pub birth_u_max: f64,
    /// Random-walk std of the amplitude per step.
    pub amp_walk_std: f64,
    /// Std of each velocity component in the initial prior, m/s.
    pub init_velocity_std: f64,
}

impl Default for SpaConfig {
    fn default() -> Self {
        Self {
            n_particles: 4096,
            p_de: 0.5,
            mode: Mode::Los,
            p_survive: 0.99,
            p_birth: 0.01,
            birth_u_min: 1.5,
            birth_u_max: 40.0,
            amp_walk_std: 0.5,
            init_velocity_std: 0.5,
        }
    }
}

impl SpaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 64 {
            return Err(Error::config("n_particles", "n_particles must be at least 64"));
        }
        if !(self.p_de > 0.0 && self.p_de < 1.0) {
            return Err(Error::config("p_de", "p_de must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.p_survive) {
            return Err(Error::config("p_survive", "p_survive must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_birth) {
            return Err(Error::config("p_birth", "p_birth must lie in [0, 1]"));
        }
        if !(self.birth_u_min >= 0.0 && self.birth_u_max > self.birth_u_min) {
            return Err(Error::config(
                "birth_u_max",
                "birth amplitude range must satisfy 0 <= birth_u_min < birth_u_max",
            ));
        }
        if !(self.amp_walk_std >= 0.0) {
            return Err(Error::config("amp_walk_std", "amp_walk_std must be non-negative"));
        }
        if !(self.init_velocity_std >= 0.0) {
            return Err(Error::config(
                "init_velocity_std",
                "init_velocity_std must be non-negative",
            ));
        }
        Ok(())
    }
}
