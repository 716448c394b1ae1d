//! TCP transport: one listener per panel, length-prefixed frames, each
//! panel connected to the next and the tail connected back to the
//! collector.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::Deserialize;

use crate::error::{Error, ProtocolError, Result};
use crate::measurement::Synthesizer;
use crate::scenario::{load_scenario, Scenario};
use crate::spa::{Mode, PdaContext};

use super::node::{PanelNode, PanelReport, Trace};
use super::wire::{decode_message, encode_message, read_frame, write_frame, ChainMessage};
use super::{StepReply, Transport};

#[derive(Debug, Clone)]
pub struct SocketOptions {
    /// How long the collector waits for the tail's belief.
    pub step_timeout: Duration,
    pub connect_attempts: u32,
    /// First retry delay; doubles per attempt.
    pub backoff: Duration,
}

impl Default for SocketOptions {
    fn default() -> Self {
        Self {
            step_timeout: Duration::from_secs(60),
            connect_attempts: 3,
            backoff: Duration::from_millis(50),
        }
    }
}

/// Persistent outgoing connection with bounded reconnects.
pub struct Link {
    addr: String,
    stream: Option<TcpStream>,
    opts: SocketOptions,
}

impl Link {
    pub fn new(addr: impl Into<String>, opts: SocketOptions) -> Self {
        Self {
            addr: addr.into(),
            stream: None,
            opts,
        }
    }

    fn connect(&self) -> std::io::Result<TcpStream> {
        let addr = self
            .addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(ErrorKind::InvalidInput, "address resolves to nothing"))?;
        let s = TcpStream::connect_timeout(&addr, Duration::from_secs(2))?;
        s.set_nodelay(true)?;
        Ok(s)
    }

    /// Sends one frame, reconnecting up to the configured number of
    /// attempts.
    pub fn send(&mut self, frame: &[u8]) -> Result<()> {
        let mut last = None;
        for attempt in 0..self.opts.connect_attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.opts.backoff * 2u32.pow(attempt - 1));
            }
            if self.stream.is_none() {
                match self.connect() {
                    Ok(s) => self.stream = Some(s),
                    Err(e) => {
                        last = Some(e);
                        continue;
                    }
                }
            }
            let s = self.stream.as_mut().expect("connected above");
            match write_frame(s, frame) {
                Ok(()) => return Ok(()),
                Err(Error::Io(e)) => {
                    self.stream = None;
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::Io(last.unwrap_or_else(|| {
            std::io::Error::new(ErrorKind::NotConnected, "no connection attempt made")
        })))
    }
}

/// Events flowing to the collector side.
#[derive(Debug, Clone)]
pub enum NodeEvent {
    Report(PanelReport),
    Fault { panel: u16, time: u32, reason: String },
    /// A frame was rejected without side effects (e.g. a duplicate).
    Rejected { panel: u16, time: u32, reason: String },
    /// A frame arrived from the tail.
    Belief(Vec<u8>),
}

/// Handle to stop a running node from another thread.
#[derive(Debug, Clone)]
pub struct NodeControl {
    stop: Arc<AtomicBool>,
    upstream: Arc<Mutex<Option<TcpStream>>>,
    addr: SocketAddr,
}

impl NodeControl {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            stop: Arc::new(AtomicBool::new(false)),
            upstream: Arc::new(Mutex::new(None)),
            addr,
        }
    }

    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn set_upstream(&self, s: Option<TcpStream>) {
        *self.upstream.lock().unwrap() = s;
    }

    /// Stops the node: closes its current connection and wakes its
    /// listener so the serving thread exits.
    pub fn kill(&self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(s) = self.upstream.lock().unwrap().take() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
    }
}

/// Serves one panel on an already bound listener until stopped.
///
/// Frames are processed strictly in arrival order. Duplicates are
/// rejected without touching the panel state; processing or link
/// failures are reported as faults and the frame is dropped.
pub fn serve_panel_on(
    listener: TcpListener,
    next: String,
    mut node: PanelNode,
    ctl: NodeControl,
    events: Option<Sender<NodeEvent>>,
    opts: SocketOptions,
) -> Result<()> {
    let panel = node.panel_id();
    let emit = |e: NodeEvent| {
        if let Some(tx) = &events {
            let _ = tx.send(e);
        }
    };
    let mut link = Link::new(next.clone(), opts);
    while !ctl.stopped() {
        let mut stream = match listener.accept() {
            Ok((s, _)) => s,
            Err(e) => {
                if !ctl.stopped() {
                    warn!("panel {panel}: accept failed: {e}");
                }
                continue;
            }
        };
        if ctl.stopped() {
            break;
        }
        let _ = stream.set_nodelay(true);
        ctl.set_upstream(stream.try_clone().ok());
        if ctl.stopped() {
            break;
        }
        loop {
            let frame = match read_frame(&mut stream) {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(e) => {
                    if !ctl.stopped() {
                        warn!("panel {panel}: upstream read failed: {e}");
                    }
                    break;
                }
            };
            if ctl.stopped() {
                break;
            }
            let time = node.filter().next_time();
            let msg = match decode_message(&frame) {
                Ok(m) => m,
                Err(e) => {
                    emit(NodeEvent::Fault {
                        panel,
                        time,
                        reason: format!("decode failed: {e}"),
                    });
                    continue;
                }
            };
            match node.handle(&msg) {
                Ok((out, report)) => {
                    emit(NodeEvent::Report(report));
                    if let Err(e) = link.send(&encode_message(&out)) {
                        emit(NodeEvent::Fault {
                            panel,
                            time: out.time_index,
                            reason: format!("link to {next} failed: {e}"),
                        });
                        continue;
                    }
                    node.after_forward(out.time_index);
                }
                Err(Error::Protocol(p @ ProtocolError::Duplicate(t))) => {
                    info!("panel {panel}: {p}");
                    emit(NodeEvent::Rejected {
                        panel,
                        time: t,
                        reason: p.to_string(),
                    });
                }
                Err(e) => emit(NodeEvent::Fault {
                    panel,
                    time,
                    reason: e.to_string(),
                }),
            }
        }
        ctl.set_upstream(None);
    }
    Ok(())
}

/// Panel process configuration for `serve-panel`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub panel_id: u16,
    /// Scenario file; the default scene when omitted. Relative paths are
    /// taken relative to the panel config file.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub run: u16,
    #[serde(default)]
    pub mode: Option<Mode>,
}

impl PanelConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: PanelConfig =
            serde_json::from_str(&text).map_err(|e| Error::config("<panel-config>", e.to_string()))?;
        if let (Some(s), Some(dir)) = (&cfg.scenario, path.parent()) {
            if s.is_relative() {
                cfg.scenario = Some(dir.join(s));
            }
        }
        Ok(cfg)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let scn = match &self.scenario {
            Some(p) => load_scenario(p)?,
            None => crate::scenario::parse_scenario("")?,
        };
        match self.mode {
            Some(m) if m != scn.model.filter.mode => {
                let mut model = scn.model.clone();
                model.filter.mode = m;
                scn.with_model(model)
            }
            _ => Ok(scn),
        }
    }
}

/// Runs a panel process: binds `bind`, forwards to `next`, never returns
/// unless the listener fails.
pub fn serve_panel(bind: &str, next: &str, cfg: &PanelConfig) -> Result<()> {
    let scn = cfg.scenario()?;
    let ctx = Arc::new(PdaContext::from_scenario(&scn));
    let synth = Arc::new(Synthesizer::new(&scn));
    let node = PanelNode::new(&scn, cfg.panel_id, cfg.seed, cfg.run, ctx, synth)?;
    let listener = TcpListener::bind(bind)?;
    let ctl = NodeControl::new(listener.local_addr()?);
    info!(
        "panel {} listening on {}, next hop {next}",
        cfg.panel_id,
        listener.local_addr()?
    );
    serve_panel_on(listener, next.to_string(), node, ctl, None, SocketOptions::default())
}

/// Collector side of a socket chain whose nodes may live in other
/// processes. Per-panel reports are only available when the nodes share
/// the event channel (see [`SocketChain`]).
pub struct RemoteChain {
    head: Link,
    n_panels: usize,
    opts: SocketOptions,
    events: Receiver<NodeEvent>,
    sender: Sender<NodeEvent>,
    expect_reports: bool,
    tail_ctl: NodeControl,
    tail_thread: Option<JoinHandle<()>>,
}

impl RemoteChain {
    /// `tail_listener` receives the tail's output.
    pub fn new(head_addr: &str, tail_listener: TcpListener, n_panels: usize, opts: SocketOptions) -> Result<Self> {
        let (tx, rx) = channel();
        let tail_ctl = NodeControl::new(tail_listener.local_addr()?);
        let ctl = tail_ctl.clone();
        let tail_tx = tx.clone();
        let tail_thread = thread::spawn(move || {
            while !ctl.stopped() {
                let Ok((mut s, _)) = tail_listener.accept() else {
                    continue;
                };
                if ctl.stopped() {
                    break;
                }
                ctl.set_upstream(s.try_clone().ok());
                if ctl.stopped() {
                    break;
                }
                while let Ok(Some(f)) = read_frame(&mut s) {
                    if tail_tx.send(NodeEvent::Belief(f)).is_err() {
                        return;
                    }
                }
            }
        });
        Ok(Self {
            head: Link::new(head_addr, opts.clone()),
            n_panels,
            opts,
            events: rx,
            sender: tx,
            expect_reports: false,
            tail_ctl,
            tail_thread: Some(tail_thread),
        })
    }

    /// Sender for node events sharing this collector's channel; enables
    /// per-panel reports.
    pub fn event_sender(&mut self) -> Sender<NodeEvent> {
        self.expect_reports = true;
        self.sender.clone()
    }

    /// Pushes a raw frame to the head, bypassing the step protocol.
    pub fn inject(&mut self, frame: &[u8]) -> Result<()> {
        self.head.send(frame)
    }
}

impl Drop for RemoteChain {
    fn drop(&mut self) {
        self.tail_ctl.kill();
        if let Some(t) = self.tail_thread.take() {
            let _ = t.join();
        }
    }
}

impl Transport for RemoteChain {
    fn n_panels(&self) -> usize {
        self.n_panels
    }

    fn step(&mut self, msg: ChainMessage) -> Result<StepReply> {
        let n = if msg.panel_id == 0 {
            msg.time_index
        } else {
            msg.time_index + 1
        };
        let abort = |panel: u16, reason: String| Error::TimestepAborted {
            time: n,
            panel,
            reason,
        };
        self.head
            .send(&encode_message(&msg))
            .map_err(|e| abort(1, format!("cannot reach head: {e}")))?;
        let deadline = Instant::now() + self.opts.step_timeout;
        let want = if self.expect_reports { self.n_panels } else { 0 };
        let mut belief = None;
        let mut reports = Vec::with_capacity(want);
        while belief.is_none() || reports.len() < want {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.events.recv_timeout(left) {
                Ok(NodeEvent::Belief(f)) => {
                    let m = decode_message(&f)
                        .map_err(|e| abort(self.n_panels as u16, format!("bad frame from tail: {e}")))?;
                    if m.time_index == n {
                        belief = Some(m);
                    } else {
                        warn!("collector: dropping stale belief for time {}", m.time_index);
                    }
                }
                Ok(NodeEvent::Report(r)) if r.time == n => reports.push(r),
                Ok(NodeEvent::Report(_)) => {}
                Ok(NodeEvent::Fault { panel, reason, .. }) => return Err(abort(panel, reason)),
                Ok(NodeEvent::Rejected { panel, reason, .. }) => {
                    info!("collector: panel {panel} rejected a frame: {reason}")
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(abort(
                        0,
                        format!("no belief from the tail within {:?}", self.opts.step_timeout),
                    ))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(abort(0, "collector channel closed".into()))
                }
            }
        }
        reports.sort_by_key(|r| r.panel_id);
        Ok(StepReply {
            belief: belief.expect("loop exits with a belief"),
            reports,
        })
    }
}

/// All panels as threads on loopback sockets in this process.
pub struct SocketChain {
    remote: RemoteChain,
    controls: Vec<NodeControl>,
    threads: Vec<JoinHandle<Result<()>>>,
}

impl SocketChain {
    pub fn spawn(scn: &Scenario, seed: u64, run: u16, opts: SocketOptions, trace: Option<Trace>) -> Result<Self> {
        let j = scn.panels.len();
        let listeners = (0..j)
            .map(|_| TcpListener::bind("127.0.0.1:0"))
            .collect::<std::io::Result<Vec<_>>>()?;
        let addrs = listeners
            .iter()
            .map(|l| l.local_addr())
            .collect::<std::io::Result<Vec<_>>>()?;
        let tail = TcpListener::bind("127.0.0.1:0")?;
        let tail_addr = tail.local_addr()?;
        let mut remote = RemoteChain::new(&addrs[0].to_string(), tail, j, opts.clone())?;
        let ctx = Arc::new(PdaContext::from_scenario(scn));
        let synth = Arc::new(Synthesizer::new(scn));
        let mut controls = Vec::with_capacity(j);
        let mut threads = Vec::with_capacity(j);
        for (k, listener) in listeners.into_iter().enumerate() {
            let id = k as u16 + 1;
            let mut node = PanelNode::new(scn, id, seed, run, ctx.clone(), synth.clone())?;
            if let Some(t) = &trace {
                node = node.with_trace(t.clone());
            }
            let next = if k + 1 < j { addrs[k + 1] } else { tail_addr };
            let ctl = NodeControl::new(addrs[k]);
            controls.push(ctl.clone());
            let tx = remote.event_sender();
            let o = opts.clone();
            threads.push(
                thread::Builder::new()
                    .name(format!("panel-{id}"))
                    .spawn(move || serve_panel_on(listener, next.to_string(), node, ctl, Some(tx), o))?,
            );
        }
        Ok(Self {
            remote,
            controls,
            threads,
        })
    }

    /// Stops panel `panel_id` (fault injection).
    pub fn kill(&self, panel_id: u16) {
        if let Some(c) = self.controls.get((panel_id as usize).wrapping_sub(1)) {
            c.kill();
        }
    }

    pub fn inject(&mut self, frame: &[u8]) -> Result<()> {
        self.remote.inject(frame)
    }
}

impl Transport for SocketChain {
    fn n_panels(&self) -> usize {
        self.remote.n_panels()
    }

    fn step(&mut self, msg: ChainMessage) -> Result<StepReply> {
        self.remote.step(msg)
    }
}

impl Drop for SocketChain {
    fn drop(&mut self) {
        for c in &self.controls {
            c.kill();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}
