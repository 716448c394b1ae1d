use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2};
use crate::measurement::{
    log_fa_density, ClutterParams, DetectionTable, MeasurementSet, NoiseModel, PD_MAX,
};
use crate::scenario::Scenario;

use super::cloud::{log_add_exp, log_sum_exp};
use super::{AnchorBelief, AnchorGeom, ParticleCloud};

/// Smallest false-alarm rate used in the likelihood ratio.
const MIN_MU_FA: f64 = 1e-12;
/// Measurement terms this far below the missed-detection term are dropped.
const GATE_MARGIN: f64 = 40.0;

/// Everything the measurement update needs besides the messages.
#[derive(Debug, Clone)]
pub struct PdaContext {
    pub noise: NoiseModel,
    pub clutter: ClutterParams,
    pub table: DetectionTable,
}

impl PdaContext {
    pub fn new(noise: NoiseModel, clutter: ClutterParams) -> Self {
        let table = DetectionTable::new(clutter.u_th);
        Self {
            noise,
            clutter,
            table,
        }
    }

    pub fn from_scenario(scn: &Scenario) -> Self {
        Self::new(
            NoiseModel::new(&scn.radio, &scn.model.noise),
            scn.model.clutter.clone(),
        )
    }
}

/// Per-measurement constants.
struct Prepared {
    d: f64,
    aoa: f64,
    z: f64,
    inv_2var_d: f64,
    /// `None` when the array cannot resolve angles.
    inv_2var_phi: Option<f64>,
    /// Normalizers of the two Gaussians minus the clutter log-density.
    offset: f64,
    /// Squared range residual beyond which the term is negligible.
    gate_d2: f64,
}

fn prepare(meas: &MeasurementSet, ctx: &PdaContext) -> Vec<Prepared> {
    let c = &ctx.clutter;
    let ln_spatial = -(c.d_max * PI).ln();
    let ln_mu = c.mu_fa.max(MIN_MU_FA).ln();
    let floor = (1.0 - PD_MAX).ln() - GATE_MARGIN;
    meas.items
        .iter()
        .filter(|m| {
            let ok = m.u >= c.u_th && m.d.is_finite() && m.aoa.is_finite();
            if !ok {
                warn!("dropping measurement below threshold or non-finite: {m:?}");
            }
            ok
        })
        .map(|m| {
            let sd = ctx.noise.range_std(m.u);
            let sphi = ctx.noise.aoa_std(m.u, m.aoa);
            let ln_clutter = ln_mu + log_fa_density(m.u, c.u_th) + ln_spatial;
            let ln_nd = -(sd * (2.0 * PI).sqrt()).ln();
            let (inv_phi, ln_nphi) = if sphi.is_finite() {
                (Some(0.5 / (sphi * sphi)), -(sphi * (2.0 * PI).sqrt()).ln())
            } else {
                (None, -PI.ln())
            };
            let offset = ln_nd + ln_nphi - ln_clutter;
            let inv_2var_d = 0.5 / (sd * sd);
            // the amplitude factor never exceeds 1, so `offset` bounds the term
            let gate_d2 = if offset > floor {
                (offset - floor) / inv_2var_d
            } else {
                -1.0
            };
            Prepared {
                d: m.d,
                aoa: m.aoa,
                z: m.u,
                inv_2var_d,
                inv_2var_phi: inv_phi,
                offset,
                gate_d2,
            }
        })
        .collect()
}

#[inline]
fn log_lambda(x: Point2, u: f64, prep: &[Prepared], geom: &AnchorGeom, ctx: &PdaContext) -> f64 {
    let pd = ctx.table.pd(u);
    let mut acc = (1.0 - pd).ln();
    let d = geom.range(x);
    let mut aoa = None;
    for m in prep {
        let r = m.d - d;
        let r2 = r * r;
        if r2 > m.gate_d2 {
            continue;
        }
        let mut t = m.offset - r2 * m.inv_2var_d + ctx.table.ln_detected_amplitude(m.z, u);
        if let Some(k) = m.inv_2var_phi {
            let phi = *aoa.get_or_insert_with(|| geom.aoa(x));
            let e = wrap_angle(m.aoa - phi);
            t -= e * e * k;
        }
        acc = log_add_exp(acc, t);
    }
    acc
}

/// [`log_pda_likelihood`] at many positions with a shared amplitude.
pub(crate) fn log_pda_batch(
    xs: &[Point2],
    u: f64,
    meas: &MeasurementSet,
    geom: &AnchorGeom,
    ctx: &PdaContext,
) -> Vec<f64> {
    let prep = prepare(meas, ctx);
    xs.par_iter()
        .with_min_len(256)
        .map(|x| log_lambda(*x, u, &prep, geom, ctx))
        .collect()
}

/// Log of the PDA likelihood ratio for one joint particle `(x, u)`:
/// missed detection plus each measurement's path likelihood over its
/// false-alarm likelihood.
pub fn log_pda_likelihood(
    x: Point2,
    u: f64,
    meas: &MeasurementSet,
    geom: &AnchorGeom,
    ctx: &PdaContext,
) -> f64 {
    log_lambda(x, u, &prepare(meas, ctx), geom, ctx)
}

pub fn pda_likelihood(x: Point2, u: f64, meas: &MeasurementSet, geom: &AnchorGeom, ctx: &PdaContext) -> f64 {
    log_pda_likelihood(x, u, meas, geom, ctx).exp()
}

/// Result of updating with one anchor.
#[derive(Debug, Clone)]
pub struct UpdateOutput {
    /// `α · ξ`: the agent message with this anchor's evidence folded in,
    /// normalized.
    pub gamma: ParticleCloud,
    /// Per-particle `ln κ`, Monte-Carlo estimate of the message to the
    /// anchor evaluated at the paired amplitude particle.
    pub log_kappa: Vec<f64>,
    /// `ln Σ w_u·κ`.
    pub log_mean_kappa: f64,
    /// Log of the normalizer of `α · ξ`.
    pub log_evidence: f64,
    /// Likelihood evaluations performed, `N·(M+1)`.
    pub evaluations: u64,
}

/// Folds one anchor's measurements into the agent message.
pub fn measurement_update(
    alpha: &ParticleCloud,
    anchor: &AnchorBelief,
    geom: &AnchorGeom,
    meas: &MeasurementSet,
    ctx: &PdaContext,
) -> Result<UpdateOutput> {
    let n = alpha.len();
    if anchor.u_particles.len() != n {
        return Err(Error::invalid(format!(
            "agent has {n} particles but anchor {} has {}",
            anchor.anchor_id,
            anchor.u_particles.len()
        )));
    }
    let prep = prepare(meas, ctx);
    let ln_alpha_total = log_sum_exp(alpha.log_weights.iter().copied());
    if !ln_alpha_total.is_finite() {
        return Err(Error::Degenerate(format!(
            "prediction message has no mass at time {}",
            alpha.time_index
        )));
    }
    let log_lam: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| log_lambda(alpha.states[i].p, anchor.u_particles[i], &prep, geom, ctx))
        .collect();

    let ln_r = anchor.r.ln();
    let ln_not_r = (1.0 - anchor.r).ln();
    let mut gamma = ParticleCloud {
        states: alpha.states.clone(),
        log_weights: alpha
            .log_weights
            .iter()
            .zip(&log_lam)
            .map(|(w, l)| w - ln_alpha_total + log_add_exp(ln_r + l, ln_not_r))
            .collect(),
        time_index: alpha.time_index,
        origin_panel: geom.id as u16 / 100,
    };
    let log_evidence = gamma.normalize()?;

    let ln_n = (n as f64).ln();
    let log_kappa: Vec<f64> = alpha
        .log_weights
        .iter()
        .zip(&log_lam)
        .map(|(w, l)| ln_n + w - ln_alpha_total + l)
        .collect();
    let log_mean_kappa = log_sum_exp(
        anchor
            .u_weights
            .iter()
            .zip(&log_kappa)
            .map(|(w, k)| w.ln() + k),
    );
    Ok(UpdateOutput {
        gamma,
        log_kappa,
        log_mean_kappa,
        log_evidence,
        evaluations: (n * (meas.len() + 1)) as u64,
    })
}

/// Posterior anchor belief from the messages of [`measurement_update`].
pub fn existence_update(anchor: &AnchorBelief, out: &UpdateOutput) -> AnchorBelief {
    let mut next = anchor.clone();
    let lmk = out.log_mean_kappa;
    if lmk == f64::NEG_INFINITY {
        warn!(
            "anchor {}: all measurement messages vanished, marking absent",
            anchor.anchor_id
        );
        next.r = 0.0;
        return next;
    }
    next.u_weights = anchor
        .u_weights
        .iter()
        .zip(&out.log_kappa)
        .map(|(w, k)| (w.ln() + k - lmk).exp())
        .collect();
    let s: f64 = next.u_weights.iter().sum();
    next.u_weights.iter_mut().for_each(|w| *w /= s);
    next.r = if anchor.r <= 0.0 {
        0.0
    } else if anchor.r >= 1.0 {
        1.0
    } else {
        let logit = anchor.r.ln() + lmk - (1.0 - anchor.r).ln();
        1.0 / (1.0 + (-logit).exp())
    };
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{amplitude_likelihood, detection_prob, fa_amplitude_density, Measurement, PathOrigin};
    use crate::scenario::{Panel, RadioConfig};
    use crate::spa::AgentState;

    fn ctx() -> PdaContext {
        let radio = RadioConfig::default();
        PdaContext::new(
            NoiseModel::new(&radio, &Default::default()),
            ClutterParams::default(),
        )
    }

    fn geom() -> AnchorGeom {
        AnchorGeom::physical(
            1,
            &Panel {
                position: Point2::new(0.0, 15.0),
                orientation: 0.0,
            },
        )
    }

    fn set(items: Vec<(f64, f64, f64)>) -> MeasurementSet {
        MeasurementSet {
            panel_id: 1,
            time_index: 0,
            items: items
                .into_iter()
                .map(|(d, aoa, u)| Measurement {
                    d,
                    aoa,
                    u,
                    origin: PathOrigin::Los,
                })
                .collect(),
        }
    }

    #[test]
    fn no_measurements_gives_miss_probability() {
        let c = ctx();
        let l = pda_likelihood(Point2::new(5.0, 15.0), 4.0, &set(vec![]), &geom(), &c);
        assert!((l - (1.0 - detection_prob(4.0, 1.5))).abs() < 1e-5);
    }

    #[test]
    fn far_measurement_is_ignored() {
        let c = ctx();
        let x = Point2::new(5.0, 15.0);
        let u = 2.0;
        let sd = c.noise.range_std(2.0);
        let l = pda_likelihood(x, u, &set(vec![(5.0 + 10.0 * sd, 0.0, 2.0)]), &geom(), &c);
        let miss = 1.0 - c.table.pd(u);
        assert!((l - miss).abs() < 1e-12, "{l} vs {miss}");
    }

    #[test]
    fn single_term_matches_direct_formula() {
        let c = ctx();
        let x = Point2::new(5.0, 15.5);
        let u = 3.0;
        let (d, aoa, z) = (5.01, 0.09, 2.7);
        let g = geom();
        let sd = c.noise.range_std(z);
        let sp = c.noise.aoa_std(z, aoa);
        let di = g.range(x);
        let ai = g.aoa(x);
        let nd = (-(d - di).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt());
        let np = (-(aoa - ai).powi(2) / (2.0 * sp * sp)).exp() / (sp * (2.0 * PI).sqrt());
        let pd = detection_prob(u, 1.5);
        let fz = amplitude_likelihood(z, u, 1.5).unwrap();
        let fa = fa_amplitude_density(z, 1.5).unwrap() / (50.0 * PI);
        let expect = (1.0 - pd) + pd * nd * np * fz / fa;
        let got = pda_likelihood(x, u, &set(vec![(d, aoa, z)]), &g, &c);
        assert!(((got - expect) / expect).abs() < 1e-5, "{got} vs {expect}");
    }

    #[test]
    fn huge_ratio_stays_finite_in_log_domain() {
        let c = ctx();
        let g = geom();
        let x = Point2::new(3.0, 15.0);
        // strong, perfectly matching path: ratio far beyond f64 range
        let l = log_pda_likelihood(x, 80.0, &set(vec![(3.0, 0.0, 80.0)]), &g, &c);
        assert!(l.is_finite() && l > 700.0, "{l}");
    }

    fn cloud(points: &[Point2]) -> ParticleCloud {
        ParticleCloud::uniform(
            points.iter().map(|p| AgentState::new(*p, Point2::default())).collect(),
            0,
            0,
        )
    }

    #[test]
    fn existence_rises_with_matching_path_and_falls_without() {
        let c = ctx();
        let g = geom();
        let pts: Vec<Point2> = (0..64).map(|i| Point2::new(4.0 + i as f64 * 1e-4, 15.0)).collect();
        let a = cloud(&pts);
        let belief = AnchorBelief {
            anchor_id: g.id,
            position: g.position,
            u_particles: vec![8.0; 64],
            u_weights: vec![1.0 / 64.0; 64],
            r: 0.5,
        };
        let hit = measurement_update(&a, &belief, &g, &set(vec![(4.003, 0.0, 8.0)]), &c).unwrap();
        assert_eq!(hit.evaluations, 64 * 2);
        assert!(existence_update(&belief, &hit).r > 0.99);
        let miss = measurement_update(&a, &belief, &g, &set(vec![]), &c).unwrap();
        let r = existence_update(&belief, &miss).r;
        let expect = 0.5 * (1.0 - c.table.pd(8.0)) / (0.5 * (1.0 - c.table.pd(8.0)) + 0.5);
        assert!((r - expect).abs() < 1e-12);
    }

    #[test]
    fn gamma_equals_alpha_when_anchor_absent() {
        let c = ctx();
        let g = geom();
        let pts: Vec<Point2> = (0..16).map(|i| Point2::new(2.0 + i as f64, 15.0)).collect();
        let a = cloud(&pts);
        let belief = AnchorBelief {
            anchor_id: g.id,
            position: g.position,
            u_particles: vec![5.0; 16],
            u_weights: vec![1.0 / 16.0; 16],
            r: 0.0,
        };
        let out = measurement_update(&a, &belief, &g, &set(vec![(6.0, 0.0, 5.0)]), &c).unwrap();
        for (x, y) in out.gamma.log_weights.iter().zip(&a.log_weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn vanished_messages_mark_anchor_absent() {
        let belief = AnchorBelief {
            anchor_id: 100,
            position: Point2::default(),
            u_particles: vec![1.0; 2],
            u_weights: vec![0.5; 2],
            r: 0.7,
        };
        let out = UpdateOutput {
            gamma: cloud(&[Point2::default(); 2]),
            log_kappa: vec![f64::NEG_INFINITY; 2],
            log_mean_kappa: f64::NEG_INFINITY,
            log_evidence: 0.0,
            evaluations: 0,
        };
        assert_eq!(existence_update(&belief, &out).r, 0.0);
    }
}
