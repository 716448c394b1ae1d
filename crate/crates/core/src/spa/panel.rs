use std::sync::Arc;

use crate::error::{Error, ProtocolError, Result};
use crate::measurement::MeasurementSet;
use crate::rng::{Purpose, StreamKey};
use crate::scenario::Scenario;

use super::{
    anchors_for_panel, existence_update, inter_panel_predict, measurement_update, predict_agent,
    predict_anchor, redraw_velocity, resample_regularize, AnchorBelief, AnchorGeom, MotionModel, ParticleCloud,
    PdaContext, SpaConfig,
};

/// What arrives at a panel's agent-state input.
#[derive(Debug, Clone)]
pub enum AgentInput {
    /// Initial prior at time 0, used as is.
    Prior(ParticleCloud),
    /// Final belief of time `n−1`; the head panel predicts it to time `n`.
    Previous(ParticleCloud),
    /// Outgoing message of the upstream panel at time `n`.
    Hop(ParticleCloud),
}

impl AgentInput {
    pub fn target_time(&self) -> u32 {
        match self {
            AgentInput::Prior(c) | AgentInput::Hop(c) => c.time_index,
            AgentInput::Previous(c) => c.time_index + 1,
        }
    }
}

/// Output of one panel at one time step.
#[derive(Debug, Clone)]
pub struct PanelStep {
    /// Resampled outgoing message.
    pub gamma: ParticleCloud,
    /// Updated anchor beliefs of this panel.
    pub anchors: Vec<AnchorBelief>,
    /// Likelihood evaluations spent.
    pub evaluations: u64,
}

/// State and computation of one panel.
#[derive(Debug, Clone)]
pub struct PanelFilter {
    pub panel_id: u16,
    geoms: Vec<AnchorGeom>,
    beliefs: Vec<AnchorBelief>,
    predicted: Option<(u32, Vec<AnchorBelief>)>,
    next_time: u32,
    cfg: SpaConfig,
    motion: MotionModel,
    ctx: Arc<PdaContext>,
    seed: u64,
    run: u16,
}

impl PanelFilter {
    pub fn new(scn: &Scenario, panel_id: u16, seed: u64, run: u16, ctx: Arc<PdaContext>) -> Result<Self> {
        let panel = scn
            .panels
            .get((panel_id as usize).wrapping_sub(1))
            .ok_or_else(|| Error::invalid(format!("panel id {panel_id} outside 1..={}", scn.panels.len())))?;
        let cfg = scn.model.filter.clone();
        let geoms = anchors_for_panel(panel_id, panel, &scn.walls(), cfg.mode);
        let mut rng = StreamKey::new(seed, run, 0, panel_id).rng(Purpose::Init);
        let beliefs = geoms
            .iter()
            .map(|g| AnchorBelief::prior(g, &cfg, &mut rng))
            .collect();
        Ok(Self {
            panel_id,
            geoms,
            beliefs,
            predicted: None,
            next_time: 0,
            cfg,
            motion: scn.motion_model(),
            ctx,
            seed,
            run,
        })
    }

    pub fn anchors(&self) -> &[AnchorGeom] {
        &self.geoms
    }

    pub fn beliefs(&self) -> &[AnchorBelief] {
        &self.beliefs
    }

    /// Time index the panel expects next.
    pub fn next_time(&self) -> u32 {
        self.next_time
    }

    fn key(&self, n: u32) -> StreamKey {
        StreamKey::new(self.seed, self.run, n, self.panel_id)
    }

    fn anchor_prediction(&self, n: u32) -> Vec<AnchorBelief> {
        if n == 0 {
            return self.beliefs.clone();
        }
        self.beliefs
            .iter()
            .enumerate()
            .map(|(k, b)| predict_anchor(b, &self.cfg, &mut self.key(n).rng(Purpose::AnchorPredict(k as u8))))
            .collect()
    }

    /// Computes the anchor predictions for time `n` ahead of the agent
    /// message. Purely an optimization: results are identical either way.
    pub fn prefetch(&mut self, n: u32) {
        if n == self.next_time {
            self.predicted = Some((n, self.anchor_prediction(n)));
        }
    }

    /// Runs prediction, measurement update and resampling for one step.
    pub fn process(&mut self, input: AgentInput, meas: &MeasurementSet) -> Result<PanelStep> {
        let n = input.target_time();
        if n < self.next_time {
            return Err(Error::Protocol(ProtocolError::Duplicate(n)));
        }
        if n > self.next_time {
            return Err(Error::Protocol(ProtocolError::OutOfOrder {
                expected: self.next_time,
                got: n,
            }));
        }
        if meas.time_index != n || meas.panel_id != self.panel_id {
            return Err(Error::invalid(format!(
                "panel {} at time {n} got measurements of panel {} at time {}",
                self.panel_id, meas.panel_id, meas.time_index
            )));
        }
        let key = self.key(n);
        let mut alpha = match input {
            AgentInput::Prior(c) => c,
            AgentInput::Previous(c) => predict_agent(&c, &self.motion, &mut key.rng(Purpose::AgentPredict)),
            AgentInput::Hop(c) => inter_panel_predict(&c, &self.motion, n, &mut key.rng(Purpose::InterPanel))?,
        };
        if alpha.len() != self.cfg.n_particles {
            return Err(Error::invalid(format!(
                "message carries {} particles, panel expects {}",
                alpha.len(),
                self.cfg.n_particles
            )));
        }
        let predicted = match self.predicted.take() {
            Some((t, p)) if t == n => p,
            _ => self.anchor_prediction(n),
        };
        let mut evaluations = 0;
        let mut updated = Vec::with_capacity(predicted.len());
        for (geom, pred) in self.geoms.iter().zip(&predicted) {
            let out = measurement_update(&alpha, pred, geom, meas, &self.ctx)?;
            evaluations += out.evaluations;
            updated.push(existence_update(pred, &out));
            alpha = out.gamma;
        }
        let mut rng = key.rng(Purpose::Resample);
        let mut gamma = resample_regularize(&alpha, &mut rng)?;
        if n == 0 {
            // the first measurements say nothing about velocity; keep the
            // prior rather than whatever the few surviving particles carried
            redraw_velocity(&mut gamma, self.cfg.init_velocity_std, &mut rng);
        }
        gamma.origin_panel = self.panel_id;
        gamma.time_index = n;
        self.beliefs = updated;
        self.next_time = n + 1;
        Ok(PanelStep {
            gamma,
            anchors: self.beliefs.clone(),
            evaluations,
        })
    }
}
