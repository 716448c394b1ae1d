//! Planar geometry: wall segments, line-of-sight tests, mirror images
//! (virtual anchors) and single-bounce specular paths.
//!
//! Everything here is a pure function of its inputs. Contact is treated
//! conservatively: a segment that merely touches a wall counts as blocked.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

/// Tolerance used for on-segment and orientation tests (meters).
pub const GEOM_EPS: f64 = 1e-9;

/// A point (or displacement) in the floor plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Direction angle of this vector, `atan2(y, x)`.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(r * c, r * s)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// A straight wall segment. Reflective walls host virtual anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub a: Point2,
    pub b: Point2,
    #[serde(default)]
    pub reflective: bool,
}

impl Wall {
    pub fn new(a: Point2, b: Point2, reflective: bool) -> Self {
        Self { a, b, reflective }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// Distance from `p` to the closed segment.
    pub fn distance_to(&self, p: Point2) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.dot(ab);
        if len2 == 0.0 {
            return p.dist(self.a);
        }
        let t = ((p - self.a).dot(ab) / len2).clamp(0.0, 1.0);
        p.dist(self.a + ab * t)
    }

    /// True if `p` lies on the segment (within [`GEOM_EPS`]).
    pub fn contains(&self, p: Point2) -> bool {
        self.distance_to(p) <= GEOM_EPS
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

fn orient(p: Point2, q: Point2, r: Point2) -> f64 {
    (q - p).cross(r - p)
}

fn sign(v: f64) -> i8 {
    if v > GEOM_EPS {
        1
    } else if v < -GEOM_EPS {
        -1
    } else {
        0
    }
}

// r is collinear with p-q; is it inside the bounding box?
fn on_segment(p: Point2, q: Point2, r: Point2) -> bool {
    r.x <= p.x.max(q.x) + GEOM_EPS
        && r.x >= p.x.min(q.x) - GEOM_EPS
        && r.y <= p.y.max(q.y) + GEOM_EPS
        && r.y >= p.y.min(q.y) - GEOM_EPS
}

/// Whether segment `a`–`b` meets wall `w`. Proper crossings, touching
/// contacts (including segment endpoints lying on the wall) and collinear
/// overlaps all count as an intersection.
pub fn segment_intersects(a: Point2, b: Point2, w: &Wall) -> bool {
    let (c, d) = (w.a, w.b);
    let o1 = sign(orient(a, b, c));
    let o2 = sign(orient(a, b, d));
    let o3 = sign(orient(c, d, a));
    let o4 = sign(orient(c, d, b));

    if o1 != o2 && o3 != o4 && o1 * o2 <= 0 && o3 * o4 <= 0 {
        return true;
    }
    (o1 == 0 && on_segment(a, b, c))
        || (o2 == 0 && on_segment(a, b, d))
        || (o3 == 0 && on_segment(c, d, a))
        || (o4 == 0 && on_segment(c, d, b))
}

/// Reflection of `p` across the infinite line through `w`.
pub fn mirror_point(p: Point2, w: &Wall) -> Point2 {
    let ab = w.b - w.a;
    let t = (p - w.a).dot(ab) / ab.dot(ab);
    let foot = w.a + ab * t;
    foot * 2.0 - p
}

/// Line-of-sight test between the agent and a panel. Walls on which the
/// panel itself is mounted never block it.
pub fn los_visible(agent: Point2, pa: Point2, walls: &[Wall]) -> bool {
    !walls
        .iter()
        .filter(|w| !w.contains(pa) && !w.contains(agent))
        .any(|w| segment_intersects(agent, pa, w))
}

/// A valid specular single-bounce path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BouncePath {
    /// Virtual anchor: mirror image of the panel across the wall.
    pub va: Point2,
    /// Total path length, equal to `|agent - va|`.
    pub d: f64,
    pub reflection_point: Point2,
}

/// Builds the single-bounce path agent → `w` → `pa`, if it exists and
/// neither leg is blocked by another wall.
pub fn single_bounce_path(
    agent: Point2,
    pa: Point2,
    w: &Wall,
    walls: &[Wall],
) -> Option<BouncePath> {
    if !w.reflective {
        return None;
    }
    let va = mirror_point(pa, w);
    if va.dist(pa) <= GEOM_EPS {
        // panel mounted on this wall
        return None;
    }
    let ab = w.b - w.a;
    let dir = va - agent;
    let denom = dir.cross(ab);
    if denom.abs() <= GEOM_EPS {
        return None;
    }
    // agent + s*dir = w.a + t*ab
    let rel = w.a - agent;
    let s = rel.cross(ab) / denom;
    let t = rel.cross(dir) / denom;
    let len = ab.norm();
    let t_eps = GEOM_EPS / len;
    if !(s > 0.0 && s < 1.0 && t > t_eps && t < 1.0 - t_eps) {
        return None;
    }
    let rp = w.a + ab * t;

    let blocked = walls.iter().filter(|o| *o != w).any(|o| {
        let leg1 = !o.contains(agent) && segment_intersects(agent, rp, o);
        let leg2 = !o.contains(pa) && !o.contains(rp) && segment_intersects(rp, pa, o);
        leg1 || leg2
    });
    if blocked {
        return None;
    }
    Some(BouncePath {
        va,
        d: agent.dist(va),
        reflection_point: rp,
    })
}

/// Angle of arrival of a ray from `src` at a panel at `pa` whose broadside
/// points along `orientation`, expressed in the panel frame.
pub fn aoa_at_panel(pa: Point2, orientation: f64, src: Point2) -> f64 {
    wrap_angle((src - pa).angle() - orientation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn wall(ax: f64, ay: f64, bx: f64, by: f64) -> Wall {
        Wall::new(p(ax, ay), p(bx, by), true)
    }

    #[test]
    fn crossing_and_disjoint() {
        assert!(segment_intersects(p(0., 0.), p(2., 0.), &wall(1., -1., 1., 1.)));
        assert!(!segment_intersects(p(0., 0.), p(2., 0.), &wall(3., -1., 3., 1.)));
        assert!(segment_intersects(p(0., 0.), p(4., 4.), &wall(0., 2., 4., 2.)));
    }

    #[test]
    fn touching_counts() {
        // endpoint on the wall
        assert!(segment_intersects(p(0., 0.), p(1., 0.), &wall(1., -1., 1., 1.)));
        // wall endpoint touching the segment
        assert!(segment_intersects(p(0., 0.), p(2., 0.), &wall(1., 0., 1., 1.)));
        // collinear overlap
        assert!(segment_intersects(p(0., 0.), p(2., 0.), &wall(1., 0., 3., 0.)));
        // collinear but disjoint
        assert!(!segment_intersects(p(0., 0.), p(1., 0.), &wall(2., 0., 3., 0.)));
    }

    #[test]
    fn mirror_examples() {
        let x_axis = wall(0., 0., 1., 0.);
        assert_eq!(mirror_point(p(3., 4.), &x_axis), p(3., -4.));
        assert_eq!(mirror_point(p(5., 0.), &x_axis), p(5., 0.));
        let diag = wall(0., 0., 1., 1.);
        let m = mirror_point(p(1., 0.), &diag);
        assert!((m.x - 0.0).abs() < 1e-15 && (m.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn visibility() {
        assert!(los_visible(p(1., 1.), p(5., 5.), &[]));
        let mid = wall(3., 0., 3., 10.);
        assert!(!los_visible(p(1., 5.), p(5., 5.), &[mid]));
        // panel mounted on a wall: its own wall never blocks
        let outer = wall(0., 0., 0., 30.);
        assert!(los_visible(p(5., 5.), p(0., 15.), &[outer]));
    }

    #[test]
    fn default_room_visibility_brute_force() {
        // outer walls of a 30x30 room + two interior walls
        let walls = [
            wall(0., 30., 30., 30.),
            wall(30., 30., 30., 0.),
            wall(30., 0., 0., 0.),
            wall(0., 0., 0., 30.),
            wall(10., 10., 20., 10.),
            wall(10., 20., 20., 20.),
        ];
        let agent = p(5., 15.);
        let pa = p(0., 22.5);
        // brute force: sample the open segment densely, check every sample
        // against every wall that doesn't host the panel
        let mut hit = false;
        for k in 1..10_000 {
            let s = k as f64 / 10_000.0;
            let q = agent + (pa - agent) * s;
            for w in walls.iter().filter(|w| !w.contains(pa)) {
                if w.distance_to(q) < 1e-6 {
                    hit = true;
                }
            }
        }
        assert!(!hit);
        assert!(los_visible(agent, pa, &walls));
        // straight through the lower interior wall
        assert!(!los_visible(p(15., 5.), p(15., 30.), &walls));
    }

    #[test]
    fn bounce_example() {
        let floor = wall(0., 0., 4., 0.);
        let bp = single_bounce_path(p(1., 1.), p(3., 1.), &floor, &[floor]).unwrap();
        assert!(bp.va.dist(p(3., -1.)) < 1e-12);
        assert!((bp.d - 8f64.sqrt()).abs() < 1e-12);
        assert!(bp.reflection_point.dist(p(2., 0.)) < 1e-12);
    }

    #[test]
    fn bounce_rejections() {
        // reflection point falls beyond the finite wall
        let short = wall(0., 0., 1., 0.);
        assert!(single_bounce_path(p(1., 1.), p(3., 1.), &short, &[short]).is_none());
        // blocked leg
        let floor = wall(0., 0., 4., 0.);
        let blocker = Wall::new(p(1.5, -0.5), p(1.5, 0.5), false);
        assert!(single_bounce_path(p(1., 1.), p(3., 1.), &floor, &[floor, blocker]).is_none());
        // non-reflective
        let matte = Wall::new(p(0., 0.), p(4., 0.), false);
        assert!(single_bounce_path(p(1., 1.), p(3., 1.), &matte, &[matte]).is_none());
        // agent behind the wall
        assert!(single_bounce_path(p(1., -1.), p(3., 1.), &floor, &[floor]).is_none());
    }

    #[test]
    fn aoa_examples() {
        let o = p(0., 0.);
        assert!((aoa_at_panel(o, 0.0, p(5., 0.))).abs() < 1e-15);
        assert!((aoa_at_panel(o, 0.0, p(0., 5.)) - PI / 2.0).abs() < 1e-15);
        assert!(aoa_at_panel(o, PI / 2.0, p(0., 5.)).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
    }

    fn pt() -> impl Strategy<Value = Point2> {
        (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    fn nondegenerate_wall() -> impl Strategy<Value = Wall> {
        (pt(), pt())
            .prop_filter("positive length", |(a, b)| a.dist(*b) > 0.1)
            .prop_map(|(a, b)| Wall::new(a, b, true))
    }

    proptest! {
        #[test]
        fn mirror_is_involution(q in pt(), w in nondegenerate_wall()) {
            let back = mirror_point(mirror_point(q, &w), &w);
            prop_assert!(back.dist(q) < 1e-12 * (1.0 + q.norm() + w.a.norm() + w.b.norm()) * 10.0);
        }

        #[test]
        fn bounce_length_matches_legs(agent in pt(), pa in pt(), w in nondegenerate_wall()) {
            if let Some(bp) = single_bounce_path(agent, pa, &w, &[w]) {
                let legs = agent.dist(bp.reflection_point) + bp.reflection_point.dist(pa);
                prop_assert!((bp.d - legs).abs() < 1e-9);
            }
        }

        #[test]
        fn los_symmetric(a in pt(), b in pt(), ws in proptest::collection::vec(nondegenerate_wall(), 0..5)) {
            prop_assert_eq!(los_visible(a, b, &ws), los_visible(b, a, &ws));
        }

        #[test]
        fn aoa_rotates_with_orientation(src in pt(), o in -10.0..10.0f64) {
            let pa = Point2::new(0.3, -0.7);
            prop_assume!(src.dist(pa) > 1e-6);
            let diff = aoa_at_panel(pa, o, src) - aoa_at_panel(pa, 0.0, src);
            let r = wrap_angle(diff + o);
            prop_assert!(r.abs() < 1e-9 || (r.abs() - 2.0 * PI).abs() < 1e-9);
        }
    }
}
