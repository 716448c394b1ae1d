//! Distributed daisy-chain belief propagation for localizing a mobile
//! agent with panelized distributed MIMO.
//!
//! Each panel runs a particle-based sum-product filter on its own
//! measurements and hands its message on the agent state to the next
//! panel; the last panel's output is the belief for the time step.

pub mod chain;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod latency;
pub mod measurement;
pub mod rng;
pub mod scenario;
pub mod spa;

pub use error::{Error, ProtocolError, Result};
