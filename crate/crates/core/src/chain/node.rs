use std::sync::{Arc, Mutex};

use log::debug;
use serde::Serialize;

use crate::error::Result;
use crate::measurement::Synthesizer;
use crate::scenario::Scenario;
use crate::spa::{AgentInput, PanelFilter, PdaContext};

use super::ChainMessage;
use super::wire::quantize;

/// Processing stage recorded in a [`Trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Received,
    Updated,
    Forwarded,
    /// Anchor prediction for the next step finished.
    Prefetched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub panel: u16,
    pub time: u32,
    pub stage: Stage,
}

/// Shared, append-only log of processing events in arrival order.
#[derive(Debug, Clone, Default)]
pub struct Trace(Arc<Mutex<Vec<TraceEvent>>>);

impl Trace {
    pub fn record(&self, panel: u16, time: u32, stage: Stage) {
        self.0.lock().unwrap().push(TraceEvent { panel, time, stage });
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.0.lock().unwrap().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorSummary {
    pub id: u32,
    pub r: f64,
    pub u_hat: f64,
}

/// Side information a panel emits after each step. Not part of the chain
/// traffic; used for diagnostics and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelReport {
    pub panel_id: u16,
    pub time: u32,
    pub anchors: Vec<AnchorSummary>,
    pub n_meas: usize,
    pub evaluations: u64,
}

/// One panel of the daisy chain: its filter plus its own measurement
/// source.
pub struct PanelNode {
    filter: PanelFilter,
    synth: Arc<Synthesizer>,
    seed: u64,
    run: u16,
    trace: Option<Trace>,
}

impl PanelNode {
    pub fn new(
        scn: &Scenario,
        panel_id: u16,
        seed: u64,
        run: u16,
        ctx: Arc<PdaContext>,
        synth: Arc<Synthesizer>,
    ) -> Result<Self> {
        Ok(Self {
            filter: PanelFilter::new(scn, panel_id, seed, run, ctx)?,
            synth,
            seed,
            run,
            trace: None,
        })
    }

    pub fn with_trace(mut self, trace: Trace) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn panel_id(&self) -> u16 {
        self.filter.panel_id
    }

    pub fn is_head(&self) -> bool {
        self.filter.panel_id == 1
    }

    pub fn filter(&self) -> &PanelFilter {
        &self.filter
    }

    fn record(&self, time: u32, stage: Stage) {
        if let Some(t) = &self.trace {
            t.record(self.filter.panel_id, time, stage);
        }
    }

    /// How an incoming message feeds this panel. The head treats a
    /// message from the collector (sender 0) as the initial prior and
    /// anything else as last step's belief.
    fn classify(&self, msg: &ChainMessage) -> AgentInput {
        let c = msg.payload.clone();
        if !self.is_head() {
            AgentInput::Hop(c)
        } else if msg.panel_id == 0 {
            AgentInput::Prior(c)
        } else {
            AgentInput::Previous(c)
        }
    }

    /// Runs this panel's stages on one incoming message. The returned
    /// message is already float32-quantized, exactly as the next panel
    /// would decode it.
    pub fn handle(&mut self, msg: &ChainMessage) -> Result<(ChainMessage, PanelReport)> {
        let input = self.classify(msg);
        let n = input.target_time();
        self.record(n, Stage::Received);
        let meas = self.synth.panel(self.seed, self.run, n as usize, self.filter.panel_id);
        let step = self.filter.process(input, &meas)?;
        self.record(n, Stage::Updated);
        debug!(
            "panel {} t={} meas={} ess={:.0}",
            self.filter.panel_id,
            n,
            meas.len(),
            step.gamma.ess()
        );
        let report = PanelReport {
            panel_id: self.filter.panel_id,
            time: n,
            anchors: step
                .anchors
                .iter()
                .map(|a| AnchorSummary {
                    id: a.anchor_id,
                    r: a.r,
                    u_hat: a.mean_amplitude(),
                })
                .collect(),
            n_meas: meas.len(),
            evaluations: step.evaluations,
        };
        Ok((quantize(&ChainMessage::new(step.gamma))?, report))
    }

    /// Call once the outgoing message has left: starts the anchor
    /// prediction for the next step.
    pub fn after_forward(&mut self, time: u32) {
        self.record(time, Stage::Forwarded);
        if time + 1 < self.synth.n_steps() as u32 {
            self.filter.prefetch(time + 1);
            self.record(time + 1, Stage::Prefetched);
        }
    }
}
