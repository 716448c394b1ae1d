use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{wrap_angle, Point2};
use crate::measurement::MeasurementSet;
use crate::rng::StreamRng;
use crate::scenario::Scenario;

use super::cloud::log_add_exp;
use super::resample::systematic_indices;
use super::update::log_pda_batch;
use super::{AgentState, AnchorGeom, ParticleCloud, PdaContext, SpaConfig};

/// Share of the proposal spent on the uniform room component.
const UNIFORM_SHARE: f64 = 0.2;

/// One range/bearing ring segment around a panel.
struct Arc {
    center: Point2,
    geom: AnchorGeom,
    d: f64,
    sd: f64,
    aoa: f64,
    /// `None` for arrays that cannot resolve angles.
    sphi: Option<f64>,
}

impl Arc {
    fn sample(&self, rng: &mut StreamRng) -> Point2 {
        let mut r;
        loop {
            let e: f64 = rng.sample(StandardNormal);
            r = self.d + self.sd * e;
            if r > 0.0 {
                break;
            }
        }
        let phi = match self.sphi {
            Some(s) => {
                let e: f64 = rng.sample(StandardNormal);
                self.aoa + s * e
            }
            None => rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        };
        self.center + Point2::from_polar(r, self.geom.orientation + phi)
    }

    /// Density of [`Arc::sample`] in Cartesian coordinates (ignoring the
    /// negligible truncation at zero range).
    fn density(&self, x: Point2) -> f64 {
        let r = x.dist(self.center);
        if r <= 0.0 {
            return 0.0;
        }
        let gd = (-(r - self.d).powi(2) / (2.0 * self.sd * self.sd)).exp()
            / (self.sd * (2.0 * PI).sqrt());
        let gphi = match self.sphi {
            Some(s) => {
                let e = wrap_angle(self.geom.aoa(x) - self.aoa);
                (-e * e / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
            }
            None => {
                if self.geom.aoa(x).abs() < FRAC_PI_2 {
                    1.0 / PI
                } else {
                    0.0
                }
            }
        };
        gd * gphi / r
    }
}

/// Candidate pool size as a multiple of the particle count.
const POOL_FACTOR: usize = 8;
/// Number of kernels placed on the best candidates.
const N_KERNELS: usize = 64;
/// Position spread of each kernel, meters.
const KERNEL_STD: f64 = 0.6;
/// Share and spread of the wide kernels that keep some mass away from the
/// best candidates.
const WIDE_SHARE: f64 = 0.2;
const WIDE_STD: f64 = 3.0;
/// Exponent flattening the candidate scores so that several modes keep
/// kernels.
const SCORE_TEMPER: f64 = 0.3;

/// Replaces every particle velocity with a fresh `Normal(0, std²·I)` draw.
pub fn redraw_velocity(cloud: &mut ParticleCloud, std: f64, rng: &mut StreamRng) {
    for s in &mut cloud.states {
        let vx: f64 = rng.sample(StandardNormal);
        let vy: f64 = rng.sample(StandardNormal);
        s.v = Point2::new(vx, vy) * std;
    }
}

/// Initial agent belief, equally weighted, velocity
/// `Normal(0, init_velocity_std²·I)`.
///
/// A uniform cloud of a few thousand particles almost never lands inside
/// the centimeter-wide likelihood ridges of a wideband array, and
/// importance weights toward a uniform prior would be undone by the first
/// resampling at a panel without a direct path. The position prior is
/// therefore data-driven: candidates are drawn on the rings implied by
/// every panel's first measurements, scored against all of those
/// measurements at once, and Gaussian kernels are centered on the best of
/// them. A share of the particles uses much wider kernels, so that a
/// wrong center is not the only hypothesis near it; uniform particles
/// instead tend to settle on false-alarm rings of panels without a direct
/// path. Without measurements the prior is uniform.
pub fn initial_cloud(
    scn: &Scenario,
    first: &[MeasurementSet],
    cfg: &SpaConfig,
    ctx: &PdaContext,
    rng: &mut StreamRng,
) -> ParticleCloud {
    let room = scn.room;
    let area = room.area();
    let mut panels = Vec::new();
    let mut arcs = Vec::new();
    for set in first {
        let Some(panel) = scn.panels.get((set.panel_id as usize).wrapping_sub(1)) else {
            continue;
        };
        let geom = AnchorGeom::physical(set.panel_id, panel);
        for m in &set.items {
            let sphi = ctx.noise.aoa_std(m.u, m.aoa);
            arcs.push(Arc {
                center: panel.position,
                geom,
                d: m.d,
                sd: ctx.noise.range_std(m.u),
                aoa: m.aoa,
                sphi: sphi.is_finite().then_some(sphi),
            });
        }
        panels.push((geom, set));
    }
    let uniform = |rng: &mut StreamRng| {
        Point2::new(
            rng.random_range(0.0..room.width),
            rng.random_range(0.0..room.height),
        )
    };
    let n = cfg.n_particles;
    let centers = if arcs.is_empty() {
        Vec::new()
    } else {
        kernel_centers(&arcs, &panels, n * POOL_FACTOR, ctx, area, rng, &uniform)
    };
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let p = if centers.is_empty() {
            uniform(rng)
        } else {
            let c = centers[rng.random_range(0..centers.len())];
            let std = if rng.random::<f64>() < WIDE_SHARE { WIDE_STD } else { KERNEL_STD };
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            c + Point2::new(ex, ey) * std
        };
        let vx: f64 = rng.sample(StandardNormal);
        let vy: f64 = rng.sample(StandardNormal);
        states.push(AgentState::new(p, Point2::new(vx, vy) * cfg.init_velocity_std));
    }
    let log_weights = states
        .iter()
        .map(|s| if room.contains_strict(s.p) { 0.0 } else { f64::NEG_INFINITY })
        .collect();
    let mut cloud = ParticleCloud {
        states,
        log_weights,
        time_index: 0,
        origin_panel: 0,
    };
    // with kernels this wide some particle lands inside the room in practice;
    // fall back to equal weights if not
    if cloud.normalize().is_err() {
        let n = cloud.len() as f64;
        cloud.log_weights.iter_mut().for_each(|w| *w = -n.ln());
    }
    cloud
}

/// Draws a candidate pool from the ring proposal, weights each candidate by
/// its joint (tempered) evidence over all panels, and resamples kernel
/// centers from it.
fn kernel_centers(
    arcs: &[Arc],
    panels: &[(AnchorGeom, &MeasurementSet)],
    pool: usize,
    ctx: &PdaContext,
    area: f64,
    rng: &mut StreamRng,
    uniform: &dyn Fn(&mut StreamRng) -> Point2,
) -> Vec<Point2> {
    let k = arcs.len() as f64;
    let cand: Vec<Point2> = (0..pool)
        .map(|_| {
            if rng.random::<f64>() < UNIFORM_SHARE {
                uniform(rng)
            } else {
                arcs[rng.random_range(0..arcs.len())].sample(rng)
            }
        })
        .collect();
    // importance weight of the pool w.r.t. the uniform prior
    let mut score: Vec<f64> = cand
        .iter()
        .map(|x| {
            let ring: f64 = arcs.iter().map(|a| a.density(*x)).sum::<f64>() / k;
            -(UNIFORM_SHARE / area + (1.0 - UNIFORM_SHARE) * ring).ln()
        })
        .collect();
    for (geom, set) in panels {
        // a plausible direct-path amplitude for this panel
        let u = set.items.iter().map(|m| m.u).fold(ctx.clutter.u_th, f64::max);
        let ll = log_pda_batch(&cand, u, set, geom, ctx);
        for (s, l) in score.iter_mut().zip(ll) {
            // existence 1/2: ln((1 + Λ) / 2)
            *s += SCORE_TEMPER * (log_add_exp(0.0, l) - LN_2);
        }
    }
    let mut pooled = ParticleCloud {
        states: cand.iter().map(|p| AgentState::new(*p, Point2::default())).collect(),
        log_weights: score,
        time_index: 0,
        origin_panel: 0,
    };
    if pooled.normalize().is_err() {
        return Vec::new();
    }
    let out: Vec<Point2> = systematic_indices(&pooled.weights(), N_KERNELS, rng)
        .into_iter()
        .map(|i| cand[i])
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::synthesize_timestep;
    use crate::rng::{Purpose, StreamKey};
    use crate::scenario::parse_scenario;

    #[test]
    fn prior_concentrates_near_the_truth() {
        let scn = parse_scenario(r#"{"n_panels": 4, "n_steps": 10}"#).unwrap();
        let ctx = PdaContext::from_scenario(&scn);
        let cfg = SpaConfig {
            n_particles: 20_000,
            ..SpaConfig::default()
        };
        let first = synthesize_timestep(&scn, 5, 0, 0);
        let mut rng = StreamKey::new(5, 0, 0, 0).rng(Purpose::Init);
        let c = initial_cloud(&scn, &first, &cfg, &ctx, &mut rng);
        assert_eq!(c.len(), 20_000);
        assert!((c.weight_sum() - 1.0).abs() < 1e-9);
        let truth = scn.trajectory[0].p;
        let near = c.states.iter().filter(|s| s.p.dist(truth) < 1.0).count();
        // a uniform draw would put about 70 there
        assert!(near > 10_000, "{near}");
        // the wide kernels still reach well beyond the centers
        let far = c.states.iter().filter(|s| s.p.dist(truth) > 3.0).count();
        assert!(far > 1_000, "{far}");
    }

    #[test]
    fn no_measurements_gives_uniform_cloud() {
        let scn = parse_scenario(r#"{"n_panels": 4, "n_steps": 10}"#).unwrap();
        let ctx = PdaContext::from_scenario(&scn);
        let cfg = SpaConfig {
            n_particles: 1000,
            ..SpaConfig::default()
        };
        let mut rng = StreamKey::new(5, 0, 0, 0).rng(Purpose::Init);
        let c = initial_cloud(&scn, &[], &cfg, &ctx, &mut rng);
        let w = c.weights();
        assert!(w.iter().all(|x| (x - 1e-3).abs() < 1e-12));
        assert!(c.states.iter().all(|s| scn.room.contains_strict(s.p)));
    }
}
