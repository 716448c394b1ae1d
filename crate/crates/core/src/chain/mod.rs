//! Daisy-chain runtime.
//!
//! Panels are [`PanelNode`]s connected in order `1..=J`. Per time step the
//! collector hands last step's belief to the head, every panel runs its
//! local stages and forwards its message, and the tail's output comes back
//! to the collector as the new belief. Two transports move the messages:
//! [`InProcessChain`] calls the nodes directly, [`SocketChain`] runs each
//! node on its own thread behind a TCP listener. Both push every message
//! through the float32 wire encoding, so they produce identical numbers.

mod node;
mod socket;
mod wire;

pub use node::{AnchorSummary, PanelNode, PanelReport, Stage, Trace, TraceEvent};
pub use socket::{
    serve_panel, serve_panel_on, Link, NodeControl, NodeEvent, PanelConfig, RemoteChain,
    SocketChain, SocketOptions,
};
pub use wire::{
    decode_message, encode_message, message_len, quantize, read_frame, write_frame, ChainMessage,
    CRC_LEN, HEADER_LEN, MAGIC, MAX_PARTICLES, RECORD_LEN, VERSION,
};

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::Synthesizer;
use crate::rng::{Purpose, StreamKey};
use crate::scenario::Scenario;
use crate::spa::{initial_cloud, AgentState, PdaContext};

/// What the collector gets back for one time step.
#[derive(Debug, Clone)]
pub struct StepReply {
    pub belief: ChainMessage,
    /// Per-panel side reports, ordered by panel id. May be empty when the
    /// transport has no side channel.
    pub reports: Vec<PanelReport>,
}

/// Moves one time step through the chain.
pub trait Transport {
    fn n_panels(&self) -> usize;
    /// Sends `msg` to the head and waits for the tail's belief.
    fn step(&mut self, msg: ChainMessage) -> Result<StepReply>;
}

/// All panels in the calling thread.
pub struct InProcessChain {
    nodes: Vec<PanelNode>,
}

impl InProcessChain {
    pub fn new(scn: &Scenario, seed: u64, run: u16) -> Result<Self> {
        Self::with_trace(scn, seed, run, None)
    }

    pub fn with_trace(scn: &Scenario, seed: u64, run: u16, trace: Option<Trace>) -> Result<Self> {
        let ctx = Arc::new(PdaContext::from_scenario(scn));
        let synth = Arc::new(Synthesizer::new(scn));
        let nodes = (1..=scn.panels.len() as u16)
            .map(|j| {
                let n = PanelNode::new(scn, j, seed, run, ctx.clone(), synth.clone())?;
                Ok(match &trace {
                    Some(t) => n.with_trace(t.clone()),
                    None => n,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[PanelNode] {
        &self.nodes
    }
}

impl Transport for InProcessChain {
    fn n_panels(&self) -> usize {
        self.nodes.len()
    }

    fn step(&mut self, msg: ChainMessage) -> Result<StepReply> {
        let mut msg = quantize(&msg).map_err(|e| Error::TimestepAborted {
            time: msg.time_index,
            panel: 0,
            reason: e.to_string(),
        })?;
        let mut reports = Vec::with_capacity(self.nodes.len());
        for node in &mut self.nodes {
            let time = node.filter().next_time();
            let (out, rep) = node.handle(&msg).map_err(|e| Error::TimestepAborted {
                time,
                panel: node.panel_id(),
                reason: e.to_string(),
            })?;
            node.after_forward(out.time_index);
            reports.push(rep);
            msg = out;
        }
        Ok(StepReply {
            belief: msg,
            reports,
        })
    }
}

/// Collector view of one finished time step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub time: u32,
    pub state: AgentState,
    /// Anchors with existence above the detection threshold, by id.
    pub detected: Vec<u32>,
    pub reports: Vec<PanelReport>,
}

impl StepOutput {
    /// Existence probability of each panel's physical anchor, by panel.
    pub fn los_existence(&self) -> Vec<f64> {
        self.reports
            .iter()
            .map(|r| r.anchors.first().map_or(0.0, |a| a.r))
            .collect()
    }

    pub fn evaluations(&self) -> u64 {
        self.reports.iter().map(|r| r.evaluations).sum()
    }
}

#[derive(Serialize)]
struct EstimateLine<'a> {
    time: u32,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    detected: &'a [u32],
}

/// Writes one JSON-lines estimate record.
pub fn write_estimate<W: Write>(out: &mut W, s: &StepOutput) -> Result<()> {
    let line = EstimateLine {
        time: s.time,
        x: s.state.p.x,
        y: s.state.p.y,
        vx: s.state.v.x,
        vy: s.state.v.y,
        detected: &s.detected,
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Initial prior message the collector sends at time 0.
pub fn prior_message(scn: &Scenario, seed: u64, run: u16) -> Result<ChainMessage> {
    let synth = Synthesizer::new(scn);
    let ctx = PdaContext::from_scenario(scn);
    let first: Vec<_> = (1..=scn.panels.len() as u16)
        .map(|j| synth.panel(seed, run, 0, j))
        .collect();
    let mut rng = StreamKey::new(seed, run, 0, 0).rng(Purpose::Init);
    let cloud = initial_cloud(scn, &first, &scn.model.filter, &ctx, &mut rng);
    Ok(quantize(&ChainMessage::new(cloud))?)
}

/// Drives `n_steps` time steps through `transport`, calling `sink` after
/// each.
pub fn run_chain<T: Transport + ?Sized>(
    transport: &mut T,
    scn: &Scenario,
    seed: u64,
    run: u16,
    n_steps: usize,
    mut sink: impl FnMut(&StepOutput) -> Result<()>,
) -> Result<Vec<StepOutput>> {
    let p_de = scn.model.filter.p_de;
    let mut msg = prior_message(scn, seed, run)?;
    let mut outputs = Vec::with_capacity(n_steps);
    for n in 0..n_steps as u32 {
        let reply = transport.step(msg)?;
        if reply.belief.time_index != n {
            return Err(Error::TimestepAborted {
                time: n,
                panel: reply.belief.panel_id,
                reason: format!("tail returned time index {}", reply.belief.time_index),
            });
        }
        let mut detected: Vec<u32> = reply
            .reports
            .iter()
            .flat_map(|r| r.anchors.iter())
            .filter(|a| a.r > p_de)
            .map(|a| a.id)
            .collect();
        detected.sort_unstable();
        let out = StepOutput {
            time: n,
            state: reply.belief.payload.mean(),
            detected,
            reports: reply.reports,
        };
        sink(&out)?;
        outputs.push(out);
        msg = reply.belief;
    }
    Ok(outputs)
}
