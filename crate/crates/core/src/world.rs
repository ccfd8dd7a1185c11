//! Scenario geometry: obstacles, access points, waypoint mobility and coverage.
//!
//! The radio model is binary: a node is covered by an access point when it is
//! within the AP's disc range and the straight segment between them does not
//! touch any obstacle. Obstacles block fully.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{SimDuration, SimTime};

/// Points within this distance of an obstacle edge count as blocked.
pub const EDGE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn distance(self, other: Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn lerp(self, other: Point2D, f: f64) -> Point2D {
        Point2D::new(self.x + (other.x - self.x) * f, self.y + (other.y - self.y) * f)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("obstacle needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("obstacle has zero area")]
    ZeroArea,
    #[error("obstacle edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("path needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("path has {segments} segments but {speeds} segment speeds")]
    SpeedCountMismatch { segments: usize, speeds: usize },
}

/// A simple polygon that blocks radio propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    vertices: Vec<Point2D>,
    min: Point2D,
    max: Point2D,
}

impl Obstacle {
    pub fn new(vertices: Vec<Point2D>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                // Adjacent edges share a vertex by construction.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        if signed_area(&vertices).abs() <= EDGE_EPSILON {
            return Err(GeometryError::ZeroArea);
        }
        let mut min = vertices[0];
        let mut max = vertices[0];
        for v in &vertices {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        Ok(Obstacle { vertices, min, max })
    }

    /// Axis-aligned rectangle helper.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Obstacle::new(vec![
            Point2D::new(x0, y0),
            Point2D::new(x1, y0),
            Point2D::new(x1, y1),
            Point2D::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2D, Point2D)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd ray-casting containment (boundary points are not guaranteed either way).
    pub fn contains(&self, p: Point2D) -> bool {
        point_in_polygon(p, &self.vertices)
    }

    /// True iff the segment `a`-`b` touches this obstacle's interior or comes
    /// within [`EDGE_EPSILON`] of an edge. A degenerate segment never blocks.
    pub fn blocks(&self, a: Point2D, b: Point2D) -> bool {
        if a == b {
            return false;
        }
        let e = EDGE_EPSILON;
        if a.x.max(b.x) < self.min.x - e
            || a.x.min(b.x) > self.max.x + e
            || a.y.max(b.y) < self.min.y - e
            || a.y.min(b.y) > self.max.y + e
        {
            return false;
        }
        if self.edges().any(|(c, d)| segment_segment_distance(a, b, c, d) <= e) {
            return true;
        }
        // No boundary contact: the segment is wholly inside or wholly outside.
        self.contains(a.lerp(b, 0.5))
    }
}

fn signed_area(v: &[Point2D]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (p, q) = (v[i], v[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        / 2.0
}

fn cross(o: Point2D, a: Point2D, b: Point2D) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point2D, a: Point2D, b: Point2D) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, including collinear overlap.
pub fn segments_intersect(a: Point2D, b: Point2D, c: Point2D, d: Point2D) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

pub fn point_segment_distance(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point2D::new(a.x + t * dx, a.y + t * dy))
}

pub fn segment_segment_distance(a: Point2D, b: Point2D, c: Point2D, d: Point2D) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

pub fn point_in_polygon(p: Point2D, poly: &[Point2D]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.y > p.y) != (pj.y > p.y) && p.x < (pj.x - pi.x) * (p.y - pi.y) / (pj.y - pi.y) + pi.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// True iff the segment `a`-`b` is obstructed by any obstacle.
pub fn segment_blocked(a: Point2D, b: Point2D, obstacles: &[Obstacle]) -> bool {
    obstacles.iter().any(|o| o.blocks(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub id: String,
    pub position: Point2D,
    /// Disc radius in meters.
    pub range: f64,
    pub wlan_id: String,
    /// One-way latency from the AP to the wider Internet, in seconds.
    pub wired_latency_to_internet: f64,
}

pub fn covered(p: Point2D, ap: &AccessPoint, obstacles: &[Obstacle]) -> bool {
    p.distance(ap.position) <= ap.range && !segment_blocked(p, ap.position, obstacles)
}

/// Piecewise-linear mobility along waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    waypoints: Vec<Point2D>,
    speeds: Vec<f64>,
    /// Arrival time (seconds) at each waypoint.
    arrivals: Vec<f64>,
}

impl WaypointPath {
    pub fn new(waypoints: Vec<Point2D>, speed: f64) -> Result<Self, GeometryError> {
        let segments = waypoints.len().saturating_sub(1);
        Self::with_segment_speeds(waypoints, vec![speed; segments.max(1)])
    }

    /// One speed per segment (`waypoints.len() - 1` values).
    pub fn with_segment_speeds(waypoints: Vec<Point2D>, speeds: Vec<f64>) -> Result<Self, GeometryError> {
        if waypoints.len() < 2 {
            return Err(GeometryError::TooFewWaypoints(waypoints.len()));
        }
        if waypoints.iter().any(|w| !w.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let segments = waypoints.len() - 1;
        if speeds.len() != segments {
            return Err(GeometryError::SpeedCountMismatch {
                segments,
                speeds: speeds.len(),
            });
        }
        if let Some(&s) = speeds.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(GeometryError::NonPositiveSpeed(s));
        }
        let mut arrivals = Vec::with_capacity(waypoints.len());
        arrivals.push(0.0);
        for (i, s) in speeds.iter().enumerate() {
            let leg = waypoints[i].distance(waypoints[i + 1]) / s;
            arrivals.push(arrivals[i] + leg);
        }
        Ok(WaypointPath {
            waypoints,
            speeds,
            arrivals,
        })
    }

    pub fn waypoints(&self) -> &[Point2D] {
        &self.waypoints
    }

    pub fn segment_speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(0.0, f64::max)
    }

    /// Time at which the final waypoint is reached.
    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(*self.arrivals.last().expect("non-empty"))
    }

    pub fn position_at(&self, t: SimTime) -> Point2D {
        self.position_at_secs(t.as_secs_f64())
    }

    pub fn position_at_secs(&self, t: f64) -> Point2D {
        if t <= 0.0 {
            return self.waypoints[0];
        }
        let last = self.arrivals.len() - 1;
        if t >= self.arrivals[last] {
            return self.waypoints[last];
        }
        // First waypoint arriving strictly after t.
        let i = self.arrivals.partition_point(|&a| a <= t);
        let (t0, t1) = (self.arrivals[i - 1], self.arrivals[i]);
        let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        self.waypoints[i - 1].lerp(self.waypoints[i], f)
    }
}

/// Sorted indices of the access points covering the node.
pub type CoverageSet = Vec<usize>;

pub fn coverage_set(p: Point2D, aps: &[AccessPoint], obstacles: &[Obstacle]) -> CoverageSet {
    aps.iter()
        .enumerate()
        .filter(|(_, ap)| covered(p, ap, obstacles))
        .map(|(i, _)| i)
        .collect()
}

/// Coverage sampled every `dt` from time zero through `until` (inclusive when aligned).
pub fn coverage_timeline(
    path: &WaypointPath,
    aps: &[AccessPoint],
    obstacles: &[Obstacle],
    dt: SimDuration,
    until: SimTime,
) -> Vec<(SimTime, CoverageSet)> {
    assert!(dt > SimDuration::ZERO, "dt must be positive");
    let mut out = Vec::new();
    let mut t = SimTime::ZERO;
    while t <= until {
        out.push((t, coverage_set(path.position_at(t), aps, obstacles)));
        t = t + dt;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageTransition {
    pub time: SimTime,
    pub ap: usize,
    pub covered: bool,
}

/// Per-AP coverage along a path: initial state plus refined transition instants.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub initial: Vec<bool>,
    /// Sorted by `(time, ap)`.
    pub transitions: Vec<CoverageTransition>,
    pub horizon: SimTime,
}

impl CoverageMap {
    /// Samples each AP every `dt` and bisects every observed flip down to
    /// `resolution`. Flips shorter than `dt` can be missed.
    pub fn build(
        path: &WaypointPath,
        aps: &[AccessPoint],
        obstacles: &[Obstacle],
        dt: SimDuration,
        resolution: SimDuration,
        until: SimTime,
    ) -> Self {
        assert!(dt > SimDuration::ZERO && resolution > SimDuration::ZERO);
        let state = |ap: &AccessPoint, t: SimTime| covered(path.position_at(t), ap, obstacles);
        let mut initial = Vec::with_capacity(aps.len());
        let mut transitions = Vec::new();
        for (idx, ap) in aps.iter().enumerate() {
            let mut prev_t = SimTime::ZERO;
            let mut prev = state(ap, prev_t);
            initial.push(prev);
            while prev_t < until {
                let next_t = (prev_t + dt).min(until);
                let cur = state(ap, next_t);
                if cur != prev {
                    let (mut lo, mut hi) = (prev_t, next_t);
                    while hi.as_micros() - lo.as_micros() > resolution.as_micros() {
                        let mid = SimTime::from_micros((lo.as_micros() + hi.as_micros()) / 2);
                        if state(ap, mid) == prev {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    transitions.push(CoverageTransition {
                        time: hi,
                        ap: idx,
                        covered: cur,
                    });
                    prev = cur;
                }
                prev_t = next_t;
            }
        }
        transitions.sort_by_key(|t| (t.time, t.ap));
        CoverageMap {
            initial,
            transitions,
            horizon: until,
        }
    }

    pub fn covered_at(&self, ap: usize, t: SimTime) -> bool {
        let mut state = self.initial[ap];
        for tr in self.transitions.iter().filter(|tr| tr.ap == ap) {
            if tr.time > t {
                break;
            }
            state = tr.covered;
        }
        state
    }

    /// Maximal intervals `[start, end)` in which no AP covers the node.
    pub fn gaps(&self) -> Vec<(SimTime, SimTime)> {
        let mut state = self.initial.clone();
        let mut count = state.iter().filter(|c| **c).count();
        let mut gaps = Vec::new();
        let mut open = (count == 0).then_some(SimTime::ZERO);
        for tr in &self.transitions {
            if state[tr.ap] != tr.covered {
                state[tr.ap] = tr.covered;
                if tr.covered {
                    count += 1;
                } else {
                    count -= 1;
                }
            }
            match (count, open) {
                (0, None) => open = Some(tr.time),
                (c, Some(start)) if c > 0 => {
                    gaps.push((start, tr.time));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open {
            gaps.push((start, self.horizon));
        }
        gaps
    }
}
