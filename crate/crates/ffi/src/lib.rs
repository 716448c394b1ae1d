//! C ABI for chainloc.
//!
//! Every fallible function returns a [`ClStatus`]; on failure a message is
//! available from [`cl_last_error_message`] on the same thread. Objects
//! that outlive a call are opaque handles created by `*_new` and released
//! by the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chainloc::chain::{decode_message, encode_message, message_len, prior_message, ChainMessage, InProcessChain, Transport};
use chainloc::geometry::Point2;
use chainloc::latency::{chain_latency, link_latency, panel_latency, LatencyParams};
use chainloc::measurement::marcum_q1;
use chainloc::scenario::{parse_scenario, Scenario};
use chainloc::spa::{AgentState, ParticleCloud};
use chainloc::{Error, ProtocolError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Degenerate = 4,
    TimestepAborted = 5,
    Io = 6,
    Json = 7,
    BufferTooSmall = 8,
    /// The simulation has no steps left.
    Finished = 9,
    Panic = 10,
    BadMagic = 21,
    UnsupportedVersion = 22,
    CrcMismatch = 23,
    Truncated = 24,
    InvalidPayload = 25,
    OutOfOrder = 26,
    Duplicate = 27,
}

impl From<&ProtocolError> for ClStatus {
    fn from(e: &ProtocolError) -> Self {
        match e {
            ProtocolError::BadMagic(_) => ClStatus::BadMagic,
            ProtocolError::UnsupportedVersion(_) => ClStatus::UnsupportedVersion,
            ProtocolError::CrcMismatch { .. } => ClStatus::CrcMismatch,
            ProtocolError::Truncated { .. } => ClStatus::Truncated,
            ProtocolError::InvalidPayload(_) => ClStatus::InvalidPayload,
            ProtocolError::OutOfOrder { .. } => ClStatus::OutOfOrder,
            ProtocolError::Duplicate(_) => ClStatus::Duplicate,
        }
    }
}

impl From<&Error> for ClStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => ClStatus::InvalidArgument,
            Error::Config { .. } => ClStatus::Config,
            Error::Degenerate(_) => ClStatus::Degenerate,
            Error::Protocol(p) => p.into(),
            Error::TimestepAborted { .. } => ClStatus::TimestepAborted,
            Error::Io(_) => ClStatus::Io,
            Error::Json(_) => ClStatus::Json,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: ClStatus, msg: impl Into<String>) -> ClStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> ClStatus {
    fail(e.into(), e.to_string())
}

/// Runs `f`, turning a panic into [`ClStatus::Panic`].
fn guard(f: impl FnOnce() -> ClStatus) -> ClStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ClStatus::Panic, "internal panic"))
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn cl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Marcum Q-function of order one.
///
/// # Safety
/// `out` must be null or point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn cl_marcum_q1(a: f64, b: f64, out: *mut f64) -> ClStatus {
    if out.is_null() {
        return fail(ClStatus::NullPointer, "out is null");
    }
    guard(|| match marcum_q1(a, b) {
        Ok(v) => {
            *out = v;
            ClStatus::Ok
        }
        Err(e) => from_error(&e),
    })
}

/// Latency model coefficients; see `cl_latency_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClLatencyParams {
    pub clock_hz: f64,
    pub cycles_predict_per_particle: f64,
    pub cycles_update_per_particle_per_meas: f64,
    pub cycles_resample_per_particle: f64,
    pub cycles_fixed_per_panel: f64,
    pub link_bits_per_s: f64,
    pub link_fixed_s: f64,
}

impl From<&ClLatencyParams> for LatencyParams {
    fn from(p: &ClLatencyParams) -> Self {
        LatencyParams {
            profile: "custom".into(),
            clock_hz: p.clock_hz,
            cycles_predict_per_particle: p.cycles_predict_per_particle,
            cycles_update_per_particle_per_meas: p.cycles_update_per_particle_per_meas,
            cycles_resample_per_particle: p.cycles_resample_per_particle,
            cycles_fixed_per_panel: p.cycles_fixed_per_panel,
            link_bits_per_s: p.link_bits_per_s,
            link_fixed_s: p.link_fixed_s,
        }
    }
}

/// The illustrative default profile.
#[no_mangle]
pub extern "C" fn cl_latency_params_default() -> ClLatencyParams {
    let p = LatencyParams::default();
    ClLatencyParams {
        clock_hz: p.clock_hz,
        cycles_predict_per_particle: p.cycles_predict_per_particle,
        cycles_update_per_particle_per_meas: p.cycles_update_per_particle_per_meas,
        cycles_resample_per_particle: p.cycles_resample_per_particle,
        cycles_fixed_per_panel: p.cycles_fixed_per_panel,
        link_bits_per_s: p.link_bits_per_s,
        link_fixed_s: p.link_fixed_s,
    }
}

unsafe fn checked_params(params: *const ClLatencyParams) -> Result<LatencyParams, ClStatus> {
    let Some(p) = params.as_ref() else {
        return Err(fail(ClStatus::NullPointer, "params is null"));
    };
    let p = LatencyParams::from(p);
    p.validate().map_err(|e| from_error(&e))?;
    Ok(p)
}

/// Compute seconds of one panel for one step.
///
/// # Safety
/// `params` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn cl_panel_latency(
    n_particles: usize,
    n_meas: usize,
    params: *const ClLatencyParams,
    out: *mut f64,
) -> ClStatus {
    if out.is_null() {
        return fail(ClStatus::NullPointer, "out is null");
    }
    match checked_params(params) {
        Ok(p) => {
            *out = panel_latency(n_particles, n_meas, &p);
            ClStatus::Ok
        }
        Err(s) => s,
    }
}

/// Seconds to ship one frame of `n_particles` over one hop.
///
/// # Safety
/// `params` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn cl_link_latency(
    n_particles: usize,
    params: *const ClLatencyParams,
    out: *mut f64,
) -> ClStatus {
    if out.is_null() {
        return fail(ClStatus::NullPointer, "out is null");
    }
    match checked_params(params) {
        Ok(p) => {
            *out = link_latency(n_particles, &p);
            ClStatus::Ok
        }
        Err(s) => s,
    }
}

/// Critical-path seconds of one step through `n_panels` panels, where
/// `n_meas[k]` is the measurement count at panel `k + 1`.
///
/// # Safety
/// `n_meas` must point to `n_panels` values; `params` and `out` must be
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn cl_chain_latency(
    n_panels: usize,
    n_meas: *const usize,
    n_particles: usize,
    params: *const ClLatencyParams,
    out: *mut f64,
) -> ClStatus {
    if out.is_null() || (n_meas.is_null() && n_panels > 0) {
        return fail(ClStatus::NullPointer, "n_meas or out is null");
    }
    let p = match checked_params(params) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let m = if n_panels == 0 {
        &[][..]
    } else {
        std::slice::from_raw_parts(n_meas, n_panels)
    };
    match chain_latency(n_panels, m, n_particles, &p) {
        Ok(r) => {
            *out = r.total_s;
            ClStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// One particle as carried in a chain frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClParticle {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    /// Linear weight.
    pub weight: f64,
}

/// Encoded size in bytes of a frame with `n_particles` particles.
#[no_mangle]
pub extern "C" fn cl_frame_len(n_particles: usize) -> usize {
    message_len(n_particles)
}

/// Encodes particles into a chain frame. Weights are normalized on the
/// way. On `BufferTooSmall`, `written` holds the required size.
///
/// # Safety
/// `particles` must point to `n` values, `buf` to `cap` writable bytes,
/// `written` to one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn cl_encode_frame(
    panel_id: u16,
    time_index: u32,
    particles: *const ClParticle,
    n: usize,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> ClStatus {
    if written.is_null() || buf.is_null() || (particles.is_null() && n > 0) {
        return fail(ClStatus::NullPointer, "particles, buf or written is null");
    }
    guard(|| {
        let need = message_len(n);
        *written = need;
        if cap < need {
            return fail(ClStatus::BufferTooSmall, format!("need {need} bytes, have {cap}"));
        }
        let ps = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(particles, n)
        };
        if ps.iter().any(|p| !(p.weight >= 0.0) || !p.weight.is_finite()) {
            return fail(ClStatus::InvalidArgument, "weights must be finite and nonnegative");
        }
        let mut cloud = ParticleCloud {
            states: ps
                .iter()
                .map(|p| AgentState::new(Point2::new(p.px, p.py), Point2::new(p.vx, p.vy)))
                .collect(),
            log_weights: ps.iter().map(|p| p.weight.ln()).collect(),
            time_index,
            origin_panel: panel_id,
        };
        if n > 0 {
            if let Err(e) = cloud.normalize() {
                return from_error(&e);
            }
        }
        let bytes = encode_message(&ChainMessage::new(cloud));
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        ClStatus::Ok
    })
}

/// Decodes and validates a chain frame. On `BufferTooSmall`, `n_out`
/// holds the particle count.
///
/// # Safety
/// `buf` must point to `len` bytes and `out` to `cap` particles; the other
/// pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn cl_decode_frame(
    buf: *const u8,
    len: usize,
    out: *mut ClParticle,
    cap: usize,
    n_out: *mut usize,
    panel_id: *mut u16,
    time_index: *mut u32,
) -> ClStatus {
    if buf.is_null() || n_out.is_null() || (out.is_null() && cap > 0) {
        return fail(ClStatus::NullPointer, "buf, out or n_out is null");
    }
    guard(|| {
        let msg = match decode_message(std::slice::from_raw_parts(buf, len)) {
            Ok(m) => m,
            Err(e) => return fail((&e).into(), e.to_string()),
        };
        let c = &msg.payload;
        *n_out = c.len();
        if !panel_id.is_null() {
            *panel_id = msg.panel_id;
        }
        if !time_index.is_null() {
            *time_index = msg.time_index;
        }
        if cap < c.len() {
            return fail(ClStatus::BufferTooSmall, format!("frame holds {} particles", c.len()));
        }
        for (k, (s, w)) in c.states.iter().zip(c.weights()).enumerate() {
            *out.add(k) = ClParticle {
                px: s.p.x,
                py: s.p.y,
                vx: s.v.x,
                vy: s.v.y,
                weight: w,
            };
        }
        ClStatus::Ok
    })
}

/// Opaque in-process chain simulation.
pub struct ClSimulation {
    scn: Scenario,
    chain: InProcessChain,
    next: Option<ChainMessage>,
    time: u32,
    p_de: f64,
}

/// One step's output.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClEstimate {
    pub time_index: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub true_x: f64,
    pub true_y: f64,
    /// Anchors whose existence probability exceeds the detection threshold.
    pub n_detected: u32,
}

/// Creates a simulation of the scenario in `scenario_json` (null or empty
/// for the default scene) for run `run` of `seed`.
///
/// # Safety
/// `scenario_json` must be null or a NUL-terminated string; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn cl_simulation_new(
    scenario_json: *const c_char,
    seed: u64,
    run: u16,
    out: *mut *mut ClSimulation,
) -> ClStatus {
    if out.is_null() {
        return fail(ClStatus::NullPointer, "out is null");
    }
    *out = ptr::null_mut();
    let text = if scenario_json.is_null() {
        ""
    } else {
        match CStr::from_ptr(scenario_json).to_str() {
            Ok(s) => s,
            Err(_) => return fail(ClStatus::InvalidArgument, "scenario is not UTF-8"),
        }
    };
    guard(|| {
        let built = parse_scenario(text).and_then(|scn| {
            let chain = InProcessChain::new(&scn, seed, run)?;
            let prior = prior_message(&scn, seed, run)?;
            Ok(ClSimulation {
                p_de: scn.model.filter.p_de,
                scn,
                chain,
                next: Some(prior),
                time: 0,
            })
        });
        match built {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(sim));
                ClStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Number of panels in the chain, 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_simulation_n_panels(sim: *const ClSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.scn.panels.len())
}

/// Number of time steps, 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_simulation_n_steps(sim: *const ClSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.scn.n_steps())
}

/// Advances one time step. Returns `Finished` once every step has run.
/// After any other error the simulation cannot continue.
///
/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cl_simulation_step(sim: *mut ClSimulation, out: *mut ClEstimate) -> ClStatus {
    let (Some(sim), false) = (sim.as_mut(), out.is_null()) else {
        return fail(ClStatus::NullPointer, "sim or out is null");
    };
    guard(|| {
        if sim.time as usize >= sim.scn.n_steps() {
            return fail(ClStatus::Finished, "no steps left");
        }
        let Some(msg) = sim.next.take() else {
            return fail(ClStatus::TimestepAborted, "an earlier step failed");
        };
        let reply = match sim.chain.step(msg) {
            Ok(r) => r,
            Err(e) => return from_error(&e),
        };
        let s = reply.belief.payload.mean();
        let truth = sim.scn.trajectory[sim.time as usize].p;
        *out = ClEstimate {
            time_index: sim.time,
            x: s.p.x,
            y: s.p.y,
            vx: s.v.x,
            vy: s.v.y,
            true_x: truth.x,
            true_y: truth.y,
            n_detected: reply
                .reports
                .iter()
                .flat_map(|r| &r.anchors)
                .filter(|a| a.r > sim.p_de)
                .count() as u32,
        };
        sim.next = Some(reply.belief);
        sim.time += 1;
        ClStatus::Ok
    })
}

/// Releases a simulation. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from `cl_simulation_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cl_simulation_free(sim: *mut ClSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
