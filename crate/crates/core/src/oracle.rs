//! Brute-force checkers used by the test suites. Each one recomputes a result
//! by a deliberately naive route and reports disagreements with the fast
//! implementation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::broadcast::{forward_delay, simulate_broadcast, BackoffParams, BroadcastMessage, Suppression, Topology};
use crate::handover::RunOutput;
use crate::scenario::Scenario;
use crate::time::{SimDuration, SimTime};
use crate::world::{covered, Obstacle, Point2D, EDGE_EPSILON};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleReport {
    pub check: String,
    pub instances: usize,
    /// Human-readable counterexamples, smallest first where that is meaningful.
    pub mismatches: Vec<String>,
}

impl OracleReport {
    fn new(check: &str) -> Self {
        OracleReport {
            check: check.into(),
            instances: 0,
            mismatches: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} instances, {} mismatches",
            self.check,
            self.instances,
            self.mismatches.len()
        )?;
        if let Some(m) = self.mismatches.first() {
            write!(f, " (first: {m})")?;
        }
        Ok(())
    }
}

// ---- polygon containment ------------------------------------------------

fn ray_cast_inside(p: Point2D, poly: &[Point2D]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn dist_to_boundary(p: Point2D, poly: &[Point2D]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            let (cx, cy) = (a.x + t * dx, a.y + t * dy);
            ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Compares [`Obstacle::blocks`] against dense sampling along random
/// segments, a share of which start within a few ε of an edge.
///
/// Sampling is conclusive when a sample lies inside the polygon or within ε
/// of its boundary (blocked), or when every sample is farther than half the
/// sample spacing plus ε from the boundary and outside (clear). Other
/// segments count as instances but cannot mismatch.
pub fn polygon_containment_oracle(obstacle: Option<&Obstacle>, samples: usize, seed: u64) -> OracleReport {
    let mut report = OracleReport::new("polygon_containment");
    let Some(obstacle) = obstacle else {
        report.instances = samples;
        return report;
    };
    let poly = obstacle.vertices();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in poly {
        x0 = x0.min(v.x);
        y0 = y0.min(v.y);
        x1 = x1.max(v.x);
        y1 = y1.max(v.y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const STEPS: usize = 4_000;
    for k in 0..samples {
        let rand_pt = |rng: &mut ChaCha8Rng| {
            Point2D::new(
                x0 - w * 0.5 + rng.random::<f64>() * 2.0 * w,
                y0 - h * 0.5 + rng.random::<f64>() * 2.0 * h,
            )
        };
        let (a, b) = if k % 4 == 0 {
            // Near-edge start: a point on an edge nudged off it by a few ε.
            let i = rng.random_range(0..poly.len());
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            let t: f64 = rng.random();
            let len = p.distance(q);
            let (nx, ny) = (-(q.y - p.y) / len, (q.x - p.x) / len);
            let off = [-3.0, -0.5, 0.0, 0.5, 3.0][rng.random_range(0..5)] * EDGE_EPSILON;
            let a = Point2D::new(p.x + t * (q.x - p.x) + off * nx, p.y + t * (q.y - p.y) + off * ny);
            (a, rand_pt(&mut rng))
        } else {
            (rand_pt(&mut rng), rand_pt(&mut rng))
        };
        report.instances += 1;
        let len = a.distance(b);
        let step = len / STEPS as f64;
        let mut any_blocked = false;
        let mut min_d = f64::INFINITY;
        for s in 0..=STEPS {
            let t = s as f64 / STEPS as f64;
            let p = Point2D::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            let d = dist_to_boundary(p, poly);
            min_d = min_d.min(d);
            if d <= EDGE_EPSILON * 0.999 || (ray_cast_inside(p, poly) && d > EDGE_EPSILON) {
                any_blocked = true;
                break;
            }
        }
        let exact = obstacle.blocks(a, b);
        let verdict = if any_blocked {
            Some(true)
        } else if min_d > step * 0.5 + EDGE_EPSILON * 2.0 {
            Some(false)
        } else {
            None
        };
        if let Some(v) = verdict {
            if v != exact {
                report.mismatches.push(format!(
                    "segment ({:.12},{:.12})-({:.12},{:.12}): sampled {v}, blocks() {exact}",
                    a.x, a.y, b.x, b.y
                ));
            }
        }
    }
    report
}

// ---- broadcast enumeration ----------------------------------------------

/// Replays the broadcast by hand: a plain agenda ordered by (time, insertion
/// order), with the relay and suppression rules written out again.
pub fn enumerate_broadcast(
    topo: &Topology,
    origin: usize,
    msg: &BroadcastMessage,
    backoff: &BackoffParams,
    hop_latency: SimDuration,
    rule: Suppression,
) -> (Vec<bool>, Vec<usize>) {
    #[derive(Clone, Copy)]
    enum Act {
        Rx { node: usize, from: usize, ttl: u32 },
        Tx { node: usize, ttl: u32 },
    }
    let n = topo.len();
    let mut agenda: Vec<(u64, u64, Act, bool)> = Vec::new(); // (time, order, act, live)
    let mut order = 0u64;
    let mut push = |agenda: &mut Vec<(u64, u64, Act, bool)>, t: u64, a: Act| {
        agenda.push((t, order, a, true));
        order += 1;
        agenda.len() - 1
    };
    let mut seen = vec![false; n];
    let mut pending: Vec<Option<usize>> = vec![None; n];
    let mut heard: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut tx_order = Vec::new();
    seen[origin] = true;
    push(
        &mut agenda,
        0,
        Act::Tx {
            node: origin,
            ttl: msg.ttl,
        },
    );

    loop {
        let next = agenda
            .iter()
            .enumerate()
            .filter(|(_, e)| e.3)
            .min_by_key(|(_, e)| (e.0, e.1))
            .map(|(i, _)| i);
        let Some(i) = next else { break };
        agenda[i].3 = false;
        let (now, _, act, _) = agenda[i];
        match act {
            Act::Tx { node, ttl } => {
                pending[node] = None;
                tx_order.push(node);
                for &m in topo.neighbors(node) {
                    push(
                        &mut agenda,
                        now + hop_latency.as_micros(),
                        Act::Rx {
                            node: m,
                            from: node,
                            ttl: ttl.saturating_sub(1),
                        },
                    );
                }
            }
            Act::Rx { node, from, ttl } => {
                heard[node].push(from);
                if seen[node] {
                    if let Some(p) = pending[node] {
                        let all_covered = topo
                            .neighbors(node)
                            .iter()
                            .all(|&v| heard[node].iter().any(|&t| t == v || topo.neighbors(t).contains(&v)));
                        if rule == Suppression::AnyDuplicate || all_covered {
                            agenda[p].3 = false;
                            pending[node] = None;
                        }
                    }
                    continue;
                }
                seen[node] = true;
                let pos = topo.positions[node];
                let in_area = match msg.area {
                    Some(a) => a.contains(pos),
                    None => true,
                };
                let only_sender = topo.neighbors(node).iter().all(|&v| v == from);
                if ttl >= 1 && in_area && !only_sender {
                    let d = pos.distance(topo.positions[from]);
                    let wait = SimDuration::from_secs_f64(forward_delay(d, backoff)).as_micros();
                    pending[node] = Some(push(&mut agenda, now + wait, Act::Tx { node, ttl }));
                }
            }
        }
    }
    (seen, tx_order)
}

/// Runs the simulator and the enumeration on one topology and compares
/// delivered sets and transmission order.
pub fn broadcast_enumeration_oracle(
    topo: &Topology,
    origin: usize,
    msg: &BroadcastMessage,
    backoff: &BackoffParams,
    rule: Suppression,
) -> OracleReport {
    let mut report = OracleReport::new("broadcast_enumeration");
    report.instances = 1;
    let sim = simulate_broadcast(topo, origin, msg, backoff, SimDuration::ZERO, rule);
    let (seen, order) = enumerate_broadcast(topo, origin, msg, backoff, SimDuration::ZERO, rule);
    let delivered: Vec<bool> = sim.delivered_at.iter().map(Option::is_some).collect();
    if delivered != seen || sim.transmitters != order {
        report.mismatches.push(format!(
            "{} nodes from {origin}: simulator delivered {delivered:?} tx {:?}, enumeration delivered {seen:?} tx {order:?}",
            topo.len(),
            sim.transmitters
        ));
    }
    report
}

/// Random node placement in a square, retried until connected.
pub fn random_connected_topology(seed: u64, nodes: usize, side: f64, range: f64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let pts = (0..nodes)
            .map(|_| Point2D::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
            .collect();
        let t = Topology::new(pts, range, Vec::new());
        if t.is_connected() {
            return t;
        }
    }
}

// ---- log replay ---------------------------------------------------------

/// Every logged ACK must correspond to a frame that reached its AP while the
/// node was inside that AP's coverage.
pub fn ack_coverage_oracle(sc: &Scenario, run: &RunOutput) -> OracleReport {
    let mut report = OracleReport::new("ack_coverage");
    let obstacles = sc.obstacle_shapes();
    for r in run.log.records().iter().filter(|r| r.kind == "ack") {
        report.instances += 1;
        let get = |k: &str| {
            r.detail
                .split(' ')
                .find_map(|kv| kv.strip_prefix(k).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse::<u64>().ok())
        };
        let (Some(ap), Some(tx)) = (get("ap"), get("tx_us")) else {
            report.mismatches.push(format!("unparseable ack detail `{}`", r.detail));
            continue;
        };
        let arrival = SimTime::from_micros(tx) + sc.link.frame_tx_latency;
        let pos = sc.mobile_path().position_at(arrival);
        if !covered(pos, &sc.access_points[ap as usize], &obstacles) {
            report
                .mismatches
                .push(format!("ack at {} for frame sent {tx}us while uncovered", r.time));
        }
    }
    report
}
