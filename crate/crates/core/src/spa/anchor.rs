use crate::geometry::{aoa_at_panel, mirror_point, Point2, Wall};
use crate::rng::StreamRng;
use crate::scenario::Panel;
use rand::Rng;

use super::{Mode, SpaConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorKind {
    /// The panel itself.
    Physical,
    /// Mirror image of the panel across `wall`.
    Virtual { wall: Wall },
}

/// Geometry of one anchor as seen from its panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorGeom {
    /// `100 · panel_id + k`, `k = 0` for the physical anchor.
    pub id: u32,
    /// Index within the panel.
    pub local: u8,
    pub kind: AnchorKind,
    /// Anchor position (panel position or its mirror image).
    pub position: Point2,
    pub panel_pos: Point2,
    pub orientation: f64,
}

impl AnchorGeom {
    pub fn physical(panel_id: u16, panel: &Panel) -> Self {
        Self {
            id: panel_id as u32 * 100,
            local: 0,
            kind: AnchorKind::Physical,
            position: panel.position,
            panel_pos: panel.position,
            orientation: panel.orientation,
        }
    }

    /// Path length from an agent at `x`.
    #[inline]
    pub fn range(&self, x: Point2) -> f64 {
        x.dist(self.position)
    }

    /// Angle of arrival at the panel for an agent at `x`.
    #[inline]
    pub fn aoa(&self, x: Point2) -> f64 {
        match self.kind {
            AnchorKind::Physical => aoa_at_panel(self.panel_pos, self.orientation, x),
            AnchorKind::Virtual { wall } => {
                aoa_at_panel(self.panel_pos, self.orientation, mirror_point(x, &wall))
            }
        }
    }
}

/// Anchors a panel tracks: the physical one, plus in MPC mode one virtual
/// anchor per reflective wall the panel is not mounted on.
pub fn anchors_for_panel(panel_id: u16, panel: &Panel, walls: &[Wall], mode: Mode) -> Vec<AnchorGeom> {
    let mut out = vec![AnchorGeom::physical(panel_id, panel)];
    if mode == Mode::Mpc {
        for w in walls.iter().filter(|w| w.reflective && !w.contains(panel.position)) {
            let k = out.len() as u8;
            out.push(AnchorGeom {
                id: panel_id as u32 * 100 + k as u32,
                local: k,
                kind: AnchorKind::Virtual { wall: *w },
                position: mirror_point(panel.position, w),
                panel_pos: panel.position,
                orientation: panel.orientation,
            });
        }
    }
    out
}

/// Belief about one anchor: amplitude particles with normalized weights
/// and the probability that its path exists.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorBelief {
    pub anchor_id: u32,
    pub position: Point2,
    pub u_particles: Vec<f64>,
    pub u_weights: Vec<f64>,
    pub r: f64,
}

impl AnchorBelief {
    /// Initial belief: existence 0.5, amplitude uniform over the birth range.
    pub fn prior(geom: &AnchorGeom, cfg: &SpaConfig, rng: &mut StreamRng) -> Self {
        let n = cfg.n_particles;
        let u_particles = (0..n)
            .map(|_| rng.random_range(cfg.birth_u_min..cfg.birth_u_max))
            .collect();
        Self {
            anchor_id: geom.id,
            position: geom.position,
            u_particles,
            u_weights: vec![1.0 / n as f64; n],
            r: 0.5,
        }
    }

    pub fn mean_amplitude(&self) -> f64 {
        self.u_particles
            .iter()
            .zip(&self.u_weights)
            .map(|(u, w)| u * w)
            .sum()
    }

    pub fn detected(&self, p_de: f64) -> bool {
        self.r > p_de
    }
}
