//! Binary frame for agent-state messages.
//!
//! ```text
//! magic u32 | version u16 | panel_id u16 | time_index u32 | n u32
//! n × (px f32, py f32, vx f32, vy f32, weight f32)
//! crc32 u32 over everything before it
//! ```
//! All fields little-endian; weights linear and normalized.

use std::io::{Read, Write};

use crate::error::{ProtocolError, Result};
use crate::geometry::Point2;
use crate::spa::{AgentState, ParticleCloud};

pub const MAGIC: u32 = 0x444D_424C;
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 20;
pub const CRC_LEN: usize = 4;
/// Upper bound on particles per frame accepted by the decoder.
pub const MAX_PARTICLES: usize = 1 << 22;

/// One agent-state message between panels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMessage {
    pub time_index: u32,
    /// Sending panel, 0 for the collector's initial prior.
    pub panel_id: u16,
    pub payload: ParticleCloud,
}

impl ChainMessage {
    pub fn new(payload: ParticleCloud) -> Self {
        Self {
            time_index: payload.time_index,
            panel_id: payload.origin_panel,
            payload,
        }
    }
}

/// Encoded size of a message carrying `n` particles.
pub fn message_len(n: usize) -> usize {
    HEADER_LEN + RECORD_LEN * n + CRC_LEN
}

pub fn encode_message(msg: &ChainMessage) -> Vec<u8> {
    let c = &msg.payload;
    let mut out = Vec::with_capacity(message_len(c.len()));
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&msg.panel_id.to_le_bytes());
    out.extend_from_slice(&msg.time_index.to_le_bytes());
    out.extend_from_slice(&(c.len() as u32).to_le_bytes());
    for (s, w) in c.states.iter().zip(c.weights()) {
        for v in [s.p.x, s.p.y, s.v.x, s.v.y, w] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

fn f32_at(b: &[u8], i: usize) -> f64 {
    f32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]) as f64
}

/// Parses and validates a frame. Weights are renormalized in double
/// precision, which absorbs the float32 rounding drift.
pub fn decode_message(bytes: &[u8]) -> std::result::Result<ChainMessage, ProtocolError> {
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN + CRC_LEN,
            have: bytes.len(),
        });
    }
    let magic = u32_at(bytes, 0);
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(ProtocolError::UnsupportedVersion(version));
    }
    let panel_id = u16_at(bytes, 6);
    let time_index = u32_at(bytes, 8);
    let n = u32_at(bytes, 12) as usize;
    if n > MAX_PARTICLES {
        return Err(ProtocolError::InvalidPayload("particle count too large"));
    }
    let needed = message_len(n);
    if bytes.len() < needed {
        return Err(ProtocolError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(ProtocolError::InvalidPayload("trailing bytes after checksum"));
    }
    let body = needed - CRC_LEN;
    let stored = u32_at(bytes, body);
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(ProtocolError::CrcMismatch { stored, computed });
    }
    let mut states = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for k in 0..n {
        let o = HEADER_LEN + k * RECORD_LEN;
        let v: [f64; 5] = std::array::from_fn(|i| f32_at(bytes, o + 4 * i));
        if v.iter().any(|x| !x.is_finite()) || v[4] < 0.0 {
            return Err(ProtocolError::InvalidPayload("non-finite value or negative weight"));
        }
        states.push(AgentState::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3])));
        log_weights.push(v[4].ln());
    }
    let mut payload = ParticleCloud {
        states,
        log_weights,
        time_index,
        origin_panel: panel_id,
    };
    if n > 0 && payload.normalize().is_err() {
        return Err(ProtocolError::InvalidPayload("all weights are zero"));
    }
    Ok(ChainMessage {
        time_index,
        panel_id,
        payload,
    })
}

/// The message as the receiver will see it after a trip over the wire.
/// Fails if the message does not survive encoding (non-finite values).
pub fn quantize(msg: &ChainMessage) -> std::result::Result<ChainMessage, ProtocolError> {
    decode_message(&encode_message(msg))
}

/// Writes `u32` length prefix plus frame.
pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> Result<()> {
    w.write_all(&(frame.len() as u32).to_le_bytes())?;
    w.write_all(frame)?;
    w.flush()?;
    Ok(())
}

/// Reads one length-prefixed frame. `Ok(None)` on clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > message_len(MAX_PARTICLES) {
        return Err(ProtocolError::InvalidPayload("frame length exceeds limit").into());
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}
