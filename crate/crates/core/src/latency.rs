//! Per-timestep latency model of the daisy chain.
//!
//! Each panel spends cycles on prediction, the stacked measurement update
//! and resampling; each hop ships one agent-state frame. Anchor prediction
//! for the next step overlaps the current step and is left out of the
//! critical path. The default coefficients are an illustrative profile,
//! not measured hardware numbers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::message_len;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyParams {
    /// Free-form tag describing where the coefficients come from.
    pub profile: String,
    pub clock_hz: f64,
    pub cycles_predict_per_particle: f64,
    pub cycles_update_per_particle_per_meas: f64,
    pub cycles_resample_per_particle: f64,
    pub cycles_fixed_per_panel: f64,
    pub link_bits_per_s: f64,
    pub link_fixed_s: f64,
}

impl Default for LatencyParams {
    /// Illustrative profile: 250 MHz fabric, 10 Gb/s links.
    fn default() -> Self {
        Self {
            profile: "illustrative".into(),
            clock_hz: 250e6,
            cycles_predict_per_particle: 4.0,
            cycles_update_per_particle_per_meas: 12.0,
            cycles_resample_per_particle: 6.0,
            cycles_fixed_per_panel: 1e4,
            link_bits_per_s: 10e9,
            link_fixed_s: 2e-6,
        }
    }
}

impl LatencyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        let nonneg = [
            ("cycles_predict_per_particle", self.cycles_predict_per_particle),
            ("cycles_update_per_particle_per_meas", self.cycles_update_per_particle_per_meas),
            ("cycles_resample_per_particle", self.cycles_resample_per_particle),
            ("cycles_fixed_per_panel", self.cycles_fixed_per_panel),
            ("link_fixed_s", self.link_fixed_s),
        ];
        for (k, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(k, "must be finite and nonnegative");
            }
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return bad("clock_hz", "must be positive");
        }
        if !(self.link_bits_per_s > 0.0 && self.link_bits_per_s.is_finite()) {
            return bad("link_bits_per_s", "must be positive");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

/// Compute time of one panel for one step, seconds. The update touches
/// every particle once per measurement plus once for the missed-detection
/// hypothesis.
pub fn panel_latency(n_particles: usize, n_meas: usize, p: &LatencyParams) -> f64 {
    let np = n_particles as f64;
    let cycles = p.cycles_fixed_per_panel
        + np * (p.cycles_predict_per_particle + p.cycles_resample_per_particle)
        + np * (n_meas as f64 + 1.0) * p.cycles_update_per_particle_per_meas;
    cycles / p.clock_hz
}

/// Time to ship one agent-state frame over one hop, seconds.
pub fn link_latency(n_particles: usize, p: &LatencyParams) -> f64 {
    8.0 * message_len(n_particles) as f64 / p.link_bits_per_s + p.link_fixed_s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub panels_s: Vec<f64>,
    /// `J − 1` inter-panel hops plus the hop back to the collector.
    pub links_s: Vec<f64>,
    pub total_s: f64,
}

/// Critical-path latency of one time step through `j` panels, where
/// `n_meas[k]` is the measurement count at panel `k + 1`.
pub fn chain_latency(j: usize, n_meas: &[usize], n_particles: usize, p: &LatencyParams) -> Result<LatencyReport> {
    if n_meas.len() != j {
        return Err(Error::InvalidArgument(format!(
            "{} measurement counts for {j} panels",
            n_meas.len()
        )));
    }
    let panels_s: Vec<f64> = n_meas.iter().map(|m| panel_latency(n_particles, *m, p)).collect();
    let links_s = vec![link_latency(n_particles, p); j];
    let total_s = panels_s.iter().chain(&links_s).sum();
    Ok(LatencyReport {
        panels_s,
        links_s,
        total_s,
    })
}

/// Grid for the `latency` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyGrid {
    pub n_panels: Vec<usize>,
    pub n_particles: Vec<usize>,
    /// Measurements per panel, the same at every panel.
    #[serde(default = "default_meas")]
    pub n_meas: usize,
}

fn default_meas() -> usize {
    3
}

impl LatencyGrid {
    pub fn load(path: &Path) -> Result<Self> {
        let g: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if g.n_panels.is_empty() || g.n_particles.is_empty() {
            return Err(Error::Config {
                key: "grid".into(),
                msg: "n_panels and n_particles must be nonempty".into(),
            });
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRow {
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "N_p")]
    pub n_particles: usize,
    pub total_s: f64,
}

pub fn latency_table(grid: &LatencyGrid, p: &LatencyParams) -> Result<Vec<LatencyRow>> {
    let mut rows = Vec::new();
    for &j in &grid.n_panels {
        for &np in &grid.n_particles {
            let r = chain_latency(j, &vec![grid.n_meas; j], np, p)?;
            rows.push(LatencyRow {
                j,
                n_particles: np,
                total_s: r.total_s,
            });
        }
    }
    Ok(rows)
}

pub fn write_latency_csv<W: Write>(out: W, rows: &[LatencyRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
