use super::{detection_prob, ClutterParams, Measurement, MeasurementSet, NoiseModel, PathOrigin};
use crate::error::Result;
use crate::geometry::{aoa_at_panel, los_visible, single_bounce_path, wrap_angle, Point2, Wall};
use crate::rng::{Purpose, StreamKey, StreamRng};
use crate::scenario::{Panel, Scenario};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

/// Switches for idealized synthesis.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SynthOptions {
    /// Report true path parameters without noise.
    pub noise_free: bool,
    /// Detect every path whose amplitude clears the threshold.
    pub force_detection: bool,
}

/// Generates measurements for one scene. Randomness comes from the keyed
/// stream `(seed, run, time, panel, Synthesis)`, so any panel can produce
/// its own measurements independently.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    walls: Vec<Wall>,
    panels: Vec<Panel>,
    agent: Vec<Point2>,
    noise: NoiseModel,
    clutter: ClutterParams,
    pub options: SynthOptions,
}

impl Synthesizer {
    pub fn new(scn: &Scenario) -> Self {
        Self {
            walls: scn.walls(),
            panels: scn.panels.clone(),
            agent: scn.trajectory.iter().map(|t| t.p).collect(),
            noise: NoiseModel::new(&scn.radio, &scn.model.noise),
            clutter: scn.model.clutter.clone(),
            options: SynthOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SynthOptions) -> Self {
        self.options = options;
        self
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn clutter(&self) -> &ClutterParams {
        &self.clutter
    }

    pub fn n_steps(&self) -> usize {
        self.agent.len()
    }

    pub fn n_panels(&self) -> usize {
        self.panels.len()
    }

    /// Measurements of panel `panel_id` (1-based) at trajectory step `n`.
    pub fn panel(&self, seed: u64, run: u16, n: usize, panel_id: u16) -> MeasurementSet {
        let key = StreamKey::new(seed, run, n as u32, panel_id);
        let mut rng = key.rng(Purpose::Synthesis);
        let panel = self.panels[panel_id as usize - 1];
        let agent = self.agent[n];
        let mut items = Vec::new();

        if los_visible(agent, panel.position, &self.walls) {
            let d = agent.dist(panel.position);
            let aoa = aoa_at_panel(panel.position, panel.orientation, agent);
            if let Some(m) = self.path(&mut rng, d, aoa, false, PathOrigin::Los) {
                items.push(m);
            }
        }
        for (wi, w) in self.walls.iter().enumerate() {
            if let Some(bp) = single_bounce_path(agent, panel.position, w, &self.walls) {
                let aoa = aoa_at_panel(panel.position, panel.orientation, bp.reflection_point);
                let origin = PathOrigin::Reflection(wi as u16);
                if let Some(m) = self.path(&mut rng, bp.d, aoa, true, origin) {
                    items.push(m);
                }
            }
        }
        if self.clutter.mu_fa > 0.0 {
            let count = Poisson::new(self.clutter.mu_fa)
                .map(|p| p.sample(&mut rng) as usize)
                .unwrap_or(0);
            for _ in 0..count {
                let d = rng.random::<f64>() * self.clutter.d_max;
                let aoa = (rng.random::<f64>() - 0.5) * PI;
                let u_th = self.clutter.u_th;
                // inverse CDF of the truncated Rayleigh tail
                let e: f64 = 1.0 - rng.random::<f64>();
                let u = (u_th * u_th - e.ln()).sqrt();
                items.push(Measurement {
                    d,
                    aoa,
                    u,
                    origin: PathOrigin::FalseAlarm,
                });
            }
        }
        items.shuffle(&mut rng);
        MeasurementSet {
            panel_id,
            time_index: n as u32,
            items,
        }
    }

    fn path(
        &self,
        rng: &mut StreamRng,
        d: f64,
        aoa: f64,
        is_reflection: bool,
        origin: PathOrigin,
    ) -> Option<Measurement> {
        let u_th = self.clutter.u_th;
        let u = self.noise.amplitude(d, is_reflection).ok()?;
        let detected = if self.options.force_detection {
            u >= u_th || !self.options.noise_free
        } else {
            rng.random::<f64>() < detection_prob(u, u_th)
        };
        if !detected {
            return None;
        }
        if self.options.noise_free {
            return (u >= u_th).then_some(Measurement { d, aoa, u, origin });
        }
        let sd = self.noise.range_std(u);
        let sa = self.noise.aoa_std(u, aoa);
        let d_meas = (d + sd * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        let aoa_meas = if sa.is_finite() {
            wrap_angle(aoa + sa * rng.sample::<f64, _>(StandardNormal))
        } else {
            (rng.random::<f64>() - 0.5) * PI
        };
        let z = truncated_rician(rng, u, u_th);
        Some(Measurement {
            d: d_meas,
            aoa: aoa_meas,
            u: z,
            origin,
        })
    }
}

// Rejection sampling from the Rician amplitude restricted to z >= u_th.
fn truncated_rician(rng: &mut StreamRng, u: f64, u_th: f64) -> f64 {
    let comp = Normal::new(0.0, 1.0 / SQRT_2).expect("valid std");
    for _ in 0..10_000 {
        let re = u + comp.sample(rng);
        let im = comp.sample(rng);
        let z = re.hypot(im);
        if z >= u_th {
            return z;
        }
    }
    u_th
}

/// Measurements of panel `panel_id` at step `n` with default options.
pub fn synthesize_panel(scn: &Scenario, seed: u64, run: u16, n: usize, panel_id: u16) -> MeasurementSet {
    Synthesizer::new(scn).panel(seed, run, n, panel_id)
}

/// One measurement set per panel at step `n`.
pub fn synthesize_timestep(scn: &Scenario, seed: u64, run: u16, n: usize) -> Vec<MeasurementSet> {
    let s = Synthesizer::new(scn);
    (1..=scn.panels.len() as u16)
        .map(|j| s.panel(seed, run, n, j))
        .collect()
}

/// Writes `run,time,panel,kind,d,aoa,u` rows.
pub fn write_measurement_csv<W: Write>(
    out: &mut W,
    run: u16,
    sets: &[MeasurementSet],
    header: bool,
) -> Result<()> {
    if header {
        writeln!(out, "run,time,panel,kind,d,aoa,u")?;
    }
    for s in sets {
        for m in &s.items {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                run,
                s.time_index,
                s.panel_id,
                m.origin.label(),
                m.d,
                m.aoa,
                m.u
            )?;
        }
    }
    Ok(())
}
