use super::{AgentState, AnchorBelief, ParticleCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub state: AgentState,
    /// `(anchor_id, û)` for anchors whose existence exceeds `p_de`.
    pub detected: Vec<(u32, f64)>,
}

/// Conditional-mean estimates of the agent state and of the amplitudes of
/// detected anchors.
pub fn mmse_estimates(belief: &ParticleCloud, anchors: &[AnchorBelief], p_de: f64) -> Estimates {
    Estimates {
        state: belief.mean(),
        detected: anchors
            .iter()
            .filter(|a| a.detected(p_de))
            .map(|a| (a.anchor_id, a.mean_amplitude()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn belief(id: u32, r: f64) -> AnchorBelief {
        AnchorBelief {
            anchor_id: id,
            position: Point2::default(),
            u_particles: vec![2.0, 4.0],
            u_weights: vec![0.5, 0.5],
            r,
        }
    }

    #[test]
    fn detection_gate_and_means() {
        let s = |x, y| AgentState::new(Point2::new(x, y), Point2::default());
        let c = ParticleCloud::uniform(vec![s(0.0, 0.0), s(2.0, 2.0)], 0, 0);
        let e = mmse_estimates(&c, &[belief(100, 0.4), belief(200, 0.9)], 0.5);
        assert_eq!(e.state.p, Point2::new(1.0, 1.0));
        assert_eq!(e.detected, vec![(200, 3.0)]);
    }
}
