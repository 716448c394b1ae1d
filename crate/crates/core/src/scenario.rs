//! Scene construction: room walls, panel placement, agent trajectory and
//! the JSON scenario file.
//!
//! The scenario file is a single JSON object; every key is optional and
//! unknown keys are rejected. Lengths are meters, angles radians,
//! frequencies Hz. See `README.md` for the full schema.

use crate::error::{Error, Result};
use crate::geometry::{Point2, Wall, GEOM_EPS};
use crate::measurement::{ClutterParams, NoiseParams};
use crate::spa::{MotionModel, MotionParams, SpaConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default number of time steps.
pub const DEFAULT_STEPS: usize = 526;
/// Default number of panels.
pub const DEFAULT_PANELS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Elements per side of the square array (`N_a = array_side²`).
    pub array_side: u32,
    /// Inter-element spacing; quarter wavelength when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub element_spacing_m: Option<f64>,
    /// Per-element SNR at 1 m, dB.
    pub snr_ref_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            bandwidth_hz: 400e6,
            array_side: 5,
            element_spacing_m: None,
            snr_ref_db: 30.0,
        }
    }
}

impl RadioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing_m.unwrap_or(self.wavelength() / 4.0)
    }

    pub fn n_elements(&self) -> u32 {
        self.array_side * self.array_side
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(Error::config("carrier_hz", "carrier_hz must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth_hz", "bandwidth_hz must be positive"));
        }
        if self.array_side < 1 {
            return Err(Error::config("array_side", "array_side must be at least 1"));
        }
        if let Some(s) = self.element_spacing_m {
            if !(s > 0.0) {
                return Err(Error::config(
                    "element_spacing_m",
                    "element_spacing_m must be positive",
                ));
            }
        }
        if !self.snr_ref_db.is_finite() {
            return Err(Error::config("snr_ref_db", "snr_ref_db must be finite"));
        }
        Ok(())
    }
}

/// Axis-aligned room `[0, width] × [0, height]`; "upper" is `y = height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub width: f64,
    pub height: f64,
}

impl Default for Room {
    fn default() -> Self {
        Self {
            width: 30.0,
            height: 30.0,
        }
    }
}

impl Room {
    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width + self.height)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Outer walls clockwise from the upper-left corner: top, right,
    /// bottom, left. All reflective.
    pub fn walls(&self) -> Vec<Wall> {
        let (w, h) = (self.width, self.height);
        let ul = Point2::new(0.0, h);
        let ur = Point2::new(w, h);
        let lr = Point2::new(w, 0.0);
        let ll = Point2::new(0.0, 0.0);
        vec![
            Wall::new(ul, ur, true),
            Wall::new(ur, lr, true),
            Wall::new(lr, ll, true),
            Wall::new(ll, ul, true),
        ]
    }

    pub fn contains_strict(&self, p: Point2) -> bool {
        p.x > 0.0 && p.x < self.width && p.y > 0.0 && p.y < self.height
    }

    /// Point at perimeter arc length `s` measured clockwise from the
    /// upper-left corner, plus the inward normal angle of that edge.
    fn perimeter_point(&self, s: f64) -> (Point2, f64) {
        let (w, h) = (self.width, self.height);
        let s = s.rem_euclid(self.perimeter());
        if s < w {
            (Point2::new(s, h), -FRAC_PI_2)
        } else if s < w + h {
            (Point2::new(w, h - (s - w)), PI)
        } else if s < 2.0 * w + h {
            (Point2::new(w - (s - w - h), 0.0), FRAC_PI_2)
        } else {
            (Point2::new(0.0, s - 2.0 * w - h), 0.0)
        }
    }

    fn is_corner(&self, p: Point2) -> bool {
        let near = |a: f64, b: f64| (a - b).abs() <= GEOM_EPS;
        (near(p.x, 0.0) || near(p.x, self.width)) && (near(p.y, 0.0) || near(p.y, self.height))
    }
}

/// A panel (physical anchor): position on the room boundary and the
/// direction its array broadside points to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub position: Point2,
    pub orientation: f64,
}

/// Places `j` panels on the outer walls, evenly spaced by arc length with
/// a half-spacing offset from the upper-left corner so that `j = 4` puts
/// one panel at the middle of each wall. `j = 1` uses the upper-left
/// corner; `j = 2` the upper-left and upper-right corners. Corner panels
/// face the room center; all others face along the inward wall normal.
pub fn place_panels(j: i64, room: &Room) -> Result<Vec<Panel>> {
    if j <= 0 {
        return Err(Error::invalid(format!("panel count must be positive, got {j}")));
    }
    if j > 64 {
        return Err(Error::invalid(format!("panel count must be at most 64, got {j}")));
    }
    let facing_center = |p: Point2| Panel {
        position: p,
        orientation: (room.center() - p).angle(),
    };
    let panels = match j {
        1 => vec![facing_center(Point2::new(0.0, room.height))],
        2 => vec![
            facing_center(Point2::new(0.0, room.height)),
            facing_center(Point2::new(room.width, room.height)),
        ],
        _ => {
            let spacing = room.perimeter() / j as f64;
            (0..j)
                .map(|k| {
                    let (p, normal) = room.perimeter_point((k as f64 + 0.5) * spacing);
                    if room.is_corner(p) {
                        facing_center(p)
                    } else {
                        Panel {
                            position: p,
                            orientation: normal,
                        }
                    }
                })
                .collect()
        }
    };
    Ok(panels)
}

/// One ground-truth trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub p: Point2,
    pub v: Point2,
}

/// Samples a constant-speed walk along the closed polygon through
/// `waypoints` (the last waypoint connects back to the first; the walk
/// loops as often as needed). Velocities are forward differences of the
/// sampled positions.
pub fn gen_trajectory(
    waypoints: &[Point2],
    speed: f64,
    dt: f64,
    n_steps: usize,
    room: &Room,
) -> Result<Vec<TrackPoint>> {
    if waypoints.len() < 2 {
        return Err(Error::invalid("trajectory needs at least two waypoints"));
    }
    if !(speed > 0.0) {
        return Err(Error::invalid("speed must be positive"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    if let Some(w) = waypoints.iter().find(|w| !room.contains_strict(**w)) {
        return Err(Error::invalid(format!(
            "waypoint ({}, {}) lies outside the room",
            w.x, w.y
        )));
    }

    let k = waypoints.len();
    let seg_len: Vec<f64> = (0..k).map(|i| waypoints[i].dist(waypoints[(i + 1) % k])).collect();
    let loop_len: f64 = seg_len.iter().sum();
    if !(loop_len > 0.0) {
        return Err(Error::invalid("waypoints enclose a zero-length path"));
    }

    let at = |s: f64| -> Point2 {
        let mut s = s.rem_euclid(loop_len);
        for i in 0..k {
            if s <= seg_len[i] || i == k - 1 {
                let a = waypoints[i];
                let b = waypoints[(i + 1) % k];
                let t = if seg_len[i] > 0.0 { (s / seg_len[i]).min(1.0) } else { 0.0 };
                return a + (b - a) * t;
            }
            s -= seg_len[i];
        }
        unreachable!()
    };

    let positions: Vec<Point2> = (0..=n_steps).map(|i| at(speed * dt * i as f64)).collect();
    Ok(positions
        .windows(2)
        .map(|w| TrackPoint {
            p: w[0],
            v: (w[1] - w[0]) * (1.0 / dt),
        })
        .collect())
}

/// Rounded-rectangle loop passing below the lower interior wall and
/// through the corridor between the two interior walls.
pub fn default_waypoints() -> Vec<Point2> {
    let (x0, x1, y0, y1, r) = (4.0, 26.0, 4.0, 15.0, 2.0);
    let arcs = 6;
    // corner centers counter-clockwise with their start angles
    let corners = [
        (Point2::new(x1 - r, y0 + r), -FRAC_PI_2),
        (Point2::new(x1 - r, y1 - r), 0.0),
        (Point2::new(x0 + r, y1 - r), FRAC_PI_2),
        (Point2::new(x0 + r, y0 + r), PI),
    ];
    let mut pts = Vec::new();
    for (c, start) in corners {
        for i in 0..=arcs {
            let th = start + FRAC_PI_2 * i as f64 / arcs as f64;
            pts.push(c + Point2::from_polar(r, th));
        }
    }
    pts
}

fn default_interior() -> Vec<Wall> {
    vec![
        Wall::new(Point2::new(10.0, 10.0), Point2::new(20.0, 10.0), false),
        Wall::new(Point2::new(10.0, 20.0), Point2::new(20.0, 20.0), false),
    ]
}

/// Model parameters that ride along in the scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub clutter: ClutterParams,
    pub noise: NoiseParams,
    pub motion: MotionParams,
    pub filter: SpaConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.clutter.validate()?;
        self.noise.validate()?;
        self.motion.validate()?;
        self.filter.validate()
    }
}

/// On-disk scenario description. Every key has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub room: Room,
    pub interior_walls: Vec<Wall>,
    pub n_panels: i64,
    /// Explicit panel list; overrides `n_panels` placement when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panels: Option<Vec<Panel>>,
    pub waypoints: Vec<Point2>,
    /// Agent speed; when omitted, chosen so that the default step count
    /// covers one loop. Shorter runs walk a prefix of the same track.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    pub n_steps: usize,
    pub dt_s: f64,
    pub radio: RadioConfig,
    pub model: ModelConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            room: Room::default(),
            interior_walls: default_interior(),
            n_panels: DEFAULT_PANELS as i64,
            panels: None,
            waypoints: default_waypoints(),
            speed: None,
            n_steps: DEFAULT_STEPS,
            dt_s: 0.1,
            radio: RadioConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

/// A validated, immutable scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub room: Room,
    /// Outer walls (reflective), clockwise from the top.
    pub outer: Vec<Wall>,
    pub interior: Vec<Wall>,
    pub panels: Vec<Panel>,
    pub trajectory: Vec<TrackPoint>,
    pub dt_s: f64,
    pub radio: RadioConfig,
    pub model: ModelConfig,
    config: ScenarioConfig,
}

impl Scenario {
    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        let room = cfg.room;
        if !(room.width > 0.0 && room.height > 0.0) {
            return Err(Error::config("room", "room dimensions must be positive"));
        }
        cfg.radio.validate()?;
        cfg.model.validate()?;
        if !(cfg.dt_s > 0.0) {
            return Err(Error::config("dt_s", "dt_s must be positive"));
        }
        if cfg.n_steps < 1 {
            return Err(Error::config("n_steps", "n_steps must be at least 1"));
        }
        for w in &cfg.interior_walls {
            if !(w.length() > 0.0) || !w.a.is_finite() || !w.b.is_finite() {
                return Err(Error::config("interior_walls", "walls must have positive length"));
            }
        }
        let panels = match &cfg.panels {
            Some(p) if p.is_empty() => {
                return Err(Error::config("panels", "panels must not be empty"))
            }
            Some(p) => p.clone(),
            None => place_panels(cfg.n_panels, &room)
                .map_err(|e| Error::config("n_panels", e.to_string()))?,
        };
        if cfg.waypoints.len() < 2 {
            return Err(Error::config("waypoints", "waypoints needs at least two points"));
        }
        let loop_len: f64 = (0..cfg.waypoints.len())
            .map(|i| cfg.waypoints[i].dist(cfg.waypoints[(i + 1) % cfg.waypoints.len()]))
            .sum();
        let speed = match cfg.speed {
            Some(s) if !(s > 0.0) => return Err(Error::config("speed", "speed must be positive")),
            Some(s) => s,
            None => loop_len / (DEFAULT_STEPS as f64 * cfg.dt_s),
        };
        let trajectory = gen_trajectory(&cfg.waypoints, speed, cfg.dt_s, cfg.n_steps, &room)
            .map_err(|e| Error::config("waypoints", e.to_string()))?;
        for w in &cfg.interior_walls {
            if trajectory.iter().any(|t| w.contains(t.p)) {
                return Err(Error::config("waypoints", "trajectory runs along an interior wall"));
            }
        }

        Ok(Self {
            room,
            outer: room.walls(),
            interior: cfg.interior_walls.clone(),
            panels,
            trajectory,
            dt_s: cfg.dt_s,
            radio: cfg.radio.clone(),
            model: cfg.model.clone(),
            config: cfg,
        })
    }

    /// All walls: outer first, then interior.
    pub fn walls(&self) -> Vec<Wall> {
        self.outer.iter().chain(self.interior.iter()).copied().collect()
    }

    pub fn n_steps(&self) -> usize {
        self.trajectory.len()
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn motion_model(&self) -> MotionModel {
        MotionModel::new(self.dt_s, &self.model.motion)
    }

    /// Same scene with a different model configuration.
    pub fn with_model(&self, model: ModelConfig) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.model = model;
        Self::from_config(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.config)?)
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let cfg: ScenarioConfig = if text.trim().is_empty() {
        ScenarioConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?
    };
    Scenario::from_config(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_panels_centered_per_wall() {
        let room = Room::default();
        let p = place_panels(4, &room).unwrap();
        // perimeter oracle: offsets 15, 45, 75, 105 along a 120 m loop
        let expect = [
            (Point2::new(15.0, 30.0), -FRAC_PI_2),
            (Point2::new(30.0, 15.0), PI),
            (Point2::new(15.0, 0.0), FRAC_PI_2),
            (Point2::new(0.0, 15.0), 0.0),
        ];
        for (got, (pos, o)) in p.iter().zip(expect) {
            assert!(got.position.dist(pos) < 1e-12);
            assert!((got.orientation - o).abs() < 1e-12);
        }
    }

    #[test]
    fn two_panels_upper_corners() {
        let p = place_panels(2, &Room::default()).unwrap();
        assert_eq!(p[0].position, Point2::new(0.0, 30.0));
        assert_eq!(p[1].position, Point2::new(30.0, 30.0));
        assert!((p[0].orientation + PI / 4.0).abs() < 1e-12);
        assert!((p[1].orientation + 3.0 * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_panel_at_start() {
        let p = place_panels(1, &Room::default()).unwrap();
        assert_eq!(p[0].position, Point2::new(0.0, 30.0));
    }

    #[test]
    fn rejects_nonpositive_panel_count() {
        assert!(matches!(place_panels(0, &Room::default()), Err(Error::InvalidArgument(_))));
        assert!(place_panels(-3, &Room::default()).is_err());
    }

    #[test]
    fn forty_eight_panels_twelve_per_wall() {
        let room = Room::default();
        let p = place_panels(48, &room).unwrap();
        let on = |f: &dyn Fn(&Point2) -> bool| p.iter().filter(|q| f(&q.position)).count();
        assert_eq!(on(&|q| (q.y - 30.0).abs() < 1e-9), 12);
        assert_eq!(on(&|q| (q.x - 30.0).abs() < 1e-9), 12);
        assert_eq!(on(&|q| q.y.abs() < 1e-9), 12);
        assert_eq!(on(&|q| q.x.abs() < 1e-9), 12);
    }

    #[test]
    fn panels_on_boundary() {
        let room = Room { width: 30.0, height: 20.0 };
        for j in 1..=64 {
            let p = place_panels(j, &room).unwrap();
            assert_eq!(p.len(), j as usize);
            for q in &p {
                let d = room.walls().iter().map(|w| w.distance_to(q.position)).fold(f64::MAX, f64::min);
                assert!(d < 1e-9, "J={j}: {:?}", q.position);
            }
        }
    }

    #[test]
    fn uniform_motion() {
        let room = Room::default();
        let wp = [Point2::new(5.0, 5.0), Point2::new(25.0, 5.0)];
        let t = gen_trajectory(&wp, 1.0, 1.0, 5, &room).unwrap();
        let xs: Vec<f64> = t.iter().map(|q| q.p.x).collect();
        assert_eq!(xs, vec![5.0, 6.0, 7.0, 8.0, 9.0]);
        assert!(t.iter().all(|q| q.p.y == 5.0 && (q.v.x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn trajectory_loops() {
        let room = Room::default();
        let wp = [Point2::new(5.0, 5.0), Point2::new(7.0, 5.0)];
        // loop length 4 m; at speed 1, step 4 is back at the start
        let t = gen_trajectory(&wp, 1.0, 1.0, 9, &room).unwrap();
        assert!(t[4].p.dist(wp[0]) < 1e-12);
        assert!(t[8].p.dist(wp[0]) < 1e-12);
        assert!(t[3].p.dist(Point2::new(6.0, 5.0)) < 1e-12);
    }

    #[test]
    fn waypoint_outside_room_rejected() {
        let room = Room::default();
        let wp = [Point2::new(5.0, 5.0), Point2::new(35.0, 5.0)];
        assert!(matches!(gen_trajectory(&wp, 1.0, 0.1, 10, &room), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn default_speed_constant_on_straights() {
        let scn = Scenario::from_config(ScenarioConfig::default()).unwrap();
        assert_eq!(scn.n_steps(), 526);
        let speed = {
            let cfg = scn.config();
            let wp = &cfg.waypoints;
            let len: f64 = (0..wp.len()).map(|i| wp[i].dist(wp[(i + 1) % wp.len()])).sum();
            len / (526.0 * 0.1)
        };
        let straight = scn.trajectory.iter().filter(|t| (t.v.norm() - speed).abs() < 1e-9).count();
        assert!(straight > 400, "{straight}");
        for t in &scn.trajectory {
            assert!(t.v.norm() <= speed + 1e-9);
        }
        for w in scn.trajectory.windows(2) {
            assert!((w[1].p - w[0].p - w[0].v * scn.dt_s).norm() <= 0.5);
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let s = parse_scenario("").unwrap();
        assert_eq!(s.panels.len(), 24);
        assert_eq!(s.radio.carrier_hz, 28e9);
        assert_eq!(s.radio.bandwidth_hz, 400e6);
        assert_eq!(s.radio.array_side, 5);
        assert!((s.radio.element_spacing() - s.radio.wavelength() / 4.0).abs() < 1e-15);
        assert_eq!(s.n_steps(), 526);
        let s2 = parse_scenario("{}").unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn negative_bandwidth_names_key() {
        let err = parse_scenario(r#"{"radio": {"bandwidth_hz": -1}}"#).unwrap_err();
        assert_eq!(err.to_string(), "bandwidth_hz must be positive");
        match err {
            Error::Config { key, .. } => assert_eq!(key, "bandwidth_hz"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse_scenario(r#"{"bogus": 1}"#).is_err());
        assert!(parse_scenario(r#"{"radio": {"bogus": 1}}"#).is_err());
    }

    #[test]
    fn forty_eight_from_file() {
        let s = parse_scenario(r#"{"n_panels": 48}"#).unwrap();
        assert_eq!(s.panels, place_panels(48, &Room::default()).unwrap());
    }

    #[test]
    fn round_trip() {
        let s = parse_scenario(r#"{"n_panels": 8, "radio": {"array_side": 7}, "dt_s": 0.05}"#).unwrap();
        let back = parse_scenario(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
        let d = Scenario::from_config(ScenarioConfig::default()).unwrap();
        assert_eq!(d, parse_scenario(&d.to_json().unwrap()).unwrap());
    }
}
