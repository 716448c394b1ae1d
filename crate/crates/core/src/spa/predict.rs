use crate::error::{Error, ProtocolError, Result};
use crate::geometry::Point2;
use crate::rng::StreamRng;
use rand::Rng;
use rand_distr::StandardNormal;

use super::resample::systematic_indices;
use super::{AgentState, AnchorBelief, MotionModel, ParticleCloud, SpaConfig};

fn gauss2(rng: &mut StreamRng, std: f64) -> Point2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Point2::new(x * std, y * std)
}

/// Propagates a belief one step through the constant-velocity model.
/// Weights are carried over unchanged.
pub fn predict_agent(prev: &ParticleCloud, model: &MotionModel, rng: &mut StreamRng) -> ParticleCloud {
    let dt = model.dt;
    let states = prev
        .states
        .iter()
        .map(|s| {
            let a = gauss2(rng, model.sigma_acc);
            AgentState::new(s.p + s.v * dt + a * (0.5 * dt * dt), s.v + a * dt)
        })
        .collect();
    ParticleCloud {
        states,
        log_weights: prev.log_weights.clone(),
        time_index: prev.time_index + 1,
        origin_panel: prev.origin_panel,
    }
}

/// Turns the previous panel's outgoing message into this panel's
/// prediction by jittering positions. The message must belong to
/// `expected_time`.
pub fn inter_panel_predict(
    msg: &ParticleCloud,
    model: &MotionModel,
    expected_time: u32,
    rng: &mut StreamRng,
) -> Result<ParticleCloud> {
    if msg.time_index != expected_time {
        return Err(Error::Protocol(ProtocolError::OutOfOrder {
            expected: expected_time,
            got: msg.time_index,
        }));
    }
    let states = msg
        .states
        .iter()
        .map(|s| AgentState::new(s.p + gauss2(rng, model.sigma_reg), s.v))
        .collect();
    Ok(ParticleCloud {
        states,
        log_weights: msg.log_weights.clone(),
        time_index: msg.time_index,
        origin_panel: msg.origin_panel,
    })
}

/// Bernoulli prediction of an anchor belief.
///
/// Existence becomes `p_s·r + p_b·(1−r)`. Amplitude particles are first
/// resampled to equal weights and diffused by a random walk; each is then
/// replaced by a newborn draw from the birth range with probability equal
/// to the newborn share of the predicted existence mass.
pub fn predict_anchor(prev: &AnchorBelief, cfg: &SpaConfig, rng: &mut StreamRng) -> AnchorBelief {
    let r = prev.r;
    let survive = cfg.p_survive * r;
    let born = cfg.p_birth * (1.0 - r);
    let r_pred = survive + born;
    let birth_share = if r_pred > 0.0 { born / r_pred } else { 1.0 };

    let n = prev.u_particles.len();
    let idx = systematic_indices(&prev.u_weights, n, rng);
    let u_particles = idx
        .into_iter()
        .map(|i| {
            if rng.random::<f64>() < birth_share {
                rng.random_range(cfg.birth_u_min..cfg.birth_u_max)
            } else {
                let step: f64 = rng.sample(StandardNormal);
                (prev.u_particles[i] + cfg.amp_walk_std * step).max(0.0)
            }
        })
        .collect();
    AnchorBelief {
        anchor_id: prev.anchor_id,
        position: prev.position,
        u_particles,
        u_weights: vec![1.0 / n as f64; n],
        r: r_pred,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};

    fn rng() -> StreamRng {
        StreamKey::new(1, 0, 0, 0).rng(Purpose::AgentPredict)
    }

    #[test]
    fn zero_noise_is_deterministic_cv() {
        let s = AgentState::new(Point2::new(1.0, 2.0), Point2::new(0.5, -1.0));
        let cloud = ParticleCloud::uniform(vec![s; 4], 7, 2);
        let m = MotionModel {
            dt: 0.1,
            sigma_acc: 0.0,
            sigma_reg: 0.0,
        };
        let out = predict_agent(&cloud, &m, &mut rng());
        assert_eq!(out.time_index, 8);
        for p in &out.states {
            assert!((p.p - Point2::new(1.05, 1.9)).norm() < 1e-12);
            assert_eq!(p.v, s.v);
        }
    }

    #[test]
    fn cv_moments() {
        let s = AgentState::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0));
        let n = 100_000;
        let cloud = ParticleCloud::uniform(vec![s; n], 0, 0);
        let m = MotionModel {
            dt: 0.5,
            sigma_acc: 2.0,
            sigma_reg: 0.0,
        };
        let out = predict_agent(&cloud, &m, &mut rng());
        let mx = out.states.iter().map(|s| s.p.x).sum::<f64>() / n as f64;
        let vpx = out.states.iter().map(|s| (s.p.x - 0.5).powi(2)).sum::<f64>() / n as f64;
        let vvx = out.states.iter().map(|s| (s.v.x - 1.0).powi(2)).sum::<f64>() / n as f64;
        // position variance sigma^2 dt^4 / 4, velocity variance sigma^2 dt^2
        assert!((mx - 0.5).abs() < 0.01);
        assert!((vpx / (4.0 * 0.0625 / 4.0) - 1.0).abs() < 0.03);
        assert!((vvx / (4.0 * 0.25) - 1.0).abs() < 0.03);
    }

    #[test]
    fn inter_panel_rejects_wrong_time() {
        let s = AgentState::default();
        let cloud = ParticleCloud::uniform(vec![s; 4], 3, 1);
        let m = MotionModel {
            dt: 0.1,
            sigma_acc: 1.0,
            sigma_reg: 0.01,
        };
        let err = inter_panel_predict(&cloud, &m, 4, &mut rng()).unwrap_err();
        assert!(matches!(
            err,
            Error::Protocol(ProtocolError::OutOfOrder { expected: 4, got: 3 })
        ));
        let ok = inter_panel_predict(&cloud, &m, 3, &mut rng()).unwrap();
        assert_eq!(ok.log_weights, cloud.log_weights);
    }

    #[test]
    fn existence_fixed_point() {
        let cfg = SpaConfig {
            n_particles: 64,
            ..SpaConfig::default()
        };
        let mut b = AnchorBelief {
            anchor_id: 100,
            position: Point2::default(),
            u_particles: vec![5.0; 64],
            u_weights: vec![1.0 / 64.0; 64],
            r: 1.0,
        };
        let mut r = rng();
        for _ in 0..2000 {
            b = predict_anchor(&b, &cfg, &mut r);
        }
        let fixed = cfg.p_birth / (1.0 - cfg.p_survive + cfg.p_birth);
        assert!((b.r - fixed).abs() < 1e-9, "{} vs {}", b.r, fixed);
        assert!(b.u_particles.iter().all(|u| *u >= 0.0));
        assert!((b.u_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
