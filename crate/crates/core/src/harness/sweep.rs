use std::io::Write;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{chain_latency, LatencyParams};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::spa::Mode;

use super::{divergence_count, pooled_band, rmse_scalar, run_monte_carlo, write_csv, RunResult, DEFAULT_RUNS};

/// Grid of configurations evaluated by [`run_sweep`]. Omitted grids take
/// the full design space: J ∈ {2,4,8,12,24,48}, N_a ∈ {25,49,100,144,289},
/// N_p ∈ {2048,4096,8192,16384}, B_w ∈ {40,400} MHz, both modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Scenario every grid point starts from.
    pub base: ScenarioConfig,
    pub n_panels: Vec<i64>,
    /// Elements per array; each must be a square number.
    pub array_size: Vec<u32>,
    pub n_particles: Vec<usize>,
    pub bandwidth_hz: Vec<f64>,
    pub modes: Vec<Mode>,
    pub n_runs: usize,
    pub seed: u64,
    /// Overrides the base scenario's step count.
    pub n_steps: Option<usize>,
    pub latency: LatencyParams,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            n_panels: vec![2, 4, 8, 12, 24, 48],
            array_size: vec![25, 49, 100, 144, 289],
            n_particles: vec![2048, 4096, 8192, 16384],
            bandwidth_hz: vec![40e6, 400e6],
            modes: vec![Mode::Los, Mode::Mpc],
            n_runs: DEFAULT_RUNS,
            seed: 1,
            n_steps: None,
            latency: LatencyParams::default(),
        }
    }
}

fn square_side(n: u32) -> Option<u32> {
    let s = (n as f64).sqrt().round() as u32;
    (s * s == n && s > 0).then_some(s)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| {
            Err(Error::Config {
                key: key.into(),
                msg,
            })
        };
        if self.n_panels.is_empty()
            || self.array_size.is_empty()
            || self.n_particles.is_empty()
            || self.bandwidth_hz.is_empty()
            || self.modes.is_empty()
        {
            return bad("grid", "every grid must be nonempty".into());
        }
        if let Some(n) = self.array_size.iter().find(|n| square_side(**n).is_none()) {
            return bad("array_size", format!("{n} is not a square array"));
        }
        if self.n_runs == 0 {
            return bad("n_runs", "must be at least 1".into());
        }
        if self.base.panels.is_some() {
            return bad("base.panels", "explicit panels conflict with the n_panels grid".into());
        }
        self.latency.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    /// Grid points in row order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut v = Vec::new();
        for &j in &self.n_panels {
            for &na in &self.array_size {
                for &np in &self.n_particles {
                    for &bw in &self.bandwidth_hz {
                        for &mode in &self.modes {
                            v.push(GridPoint { j, na, np, bw, mode });
                        }
                    }
                }
            }
        }
        v
    }

    pub fn scenario_for(&self, p: &GridPoint) -> Result<Scenario> {
        let mut cfg = self.base.clone();
        cfg.n_panels = p.j;
        cfg.radio.array_side = square_side(p.na).ok_or_else(|| Error::Config {
            key: "array_size".into(),
            msg: format!("{} is not a square array", p.na),
        })?;
        cfg.radio.bandwidth_hz = p.bw;
        cfg.model.filter.n_particles = p.np;
        cfg.model.filter.mode = p.mode;
        if let Some(n) = self.n_steps {
            cfg.n_steps = n;
        }
        Scenario::from_config(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub j: i64,
    pub na: u32,
    pub np: usize,
    pub bw: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "J")]
    pub j: i64,
    #[serde(rename = "N_a")]
    pub na: u32,
    #[serde(rename = "N_p")]
    pub np: usize,
    #[serde(rename = "B_w")]
    pub bw: f64,
    pub mode: Mode,
    pub rmse: Option<f64>,
    pub q10: Option<f64>,
    pub q90: Option<f64>,
    pub diverged_count: Option<usize>,
    pub mean_chain_latency_s: Option<f64>,
    /// `ok`, or the error that stopped this point.
    pub status: String,
}

/// Mean critical-path latency over every (run, step), using the
/// measurement counts each panel actually saw.
fn mean_latency(results: &[RunResult], np: usize, p: &LatencyParams) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in results.iter().flat_map(|r| &r.steps) {
        sum += chain_latency(s.n_meas.len(), &s.n_meas, np, p)?.total_s;
        n += 1;
    }
    Ok(sum / n.max(1) as f64)
}

fn evaluate(spec: &SweepSpec, p: &GridPoint) -> Result<SweepRow> {
    let scn = spec.scenario_for(p)?;
    let results = run_monte_carlo(&scn, spec.n_runs, spec.seed)?;
    let (q10, q90) = pooled_band(&results)?;
    Ok(SweepRow {
        j: p.j,
        na: p.na,
        np: p.np,
        bw: p.bw,
        mode: p.mode,
        rmse: Some(rmse_scalar(&results)?),
        q10: Some(q10),
        q90: Some(q90),
        diverged_count: Some(divergence_count(&results)),
        mean_chain_latency_s: Some(mean_latency(&results, p.np, &spec.latency)?),
        status: "ok".into(),
    })
}

/// Evaluates every grid point. A failing point becomes a row carrying the
/// error and the sweep moves on.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points = spec.points();
    let mut rows = Vec::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        info!(
            "sweep point {}/{}: J={} N_a={} N_p={} B_w={} mode={}",
            k + 1,
            points.len(),
            p.j,
            p.na,
            p.np,
            p.bw,
            p.mode
        );
        rows.push(evaluate(spec, p).unwrap_or_else(|e| {
            warn!("sweep point failed: {e}");
            SweepRow {
                j: p.j,
                na: p.na,
                np: p.np,
                bw: p.bw,
                mode: p.mode,
                rmse: None,
                q10: None,
                q90: None,
                diverged_count: None,
                mean_chain_latency_s: None,
                status: format!("error: {e}"),
            }
        }));
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    write_csv(out, rows)
}
