//! Multihop dissemination among ad-hoc nodes: farther-node-first broadcast
//! with TTL and area bounding, plus greedy geographic relay toward a gateway.

use crate::engine::{Engine, EventLog, EventPayload};
use crate::time::{SimDuration, SimTime};
use crate::world::{segment_blocked, AccessPoint, Obstacle, Point2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Area {
    Circle { center: Point2D, radius: f64 },
    Rect { min: Point2D, max: Point2D },
}

impl Area {
    pub fn contains(&self, p: Point2D) -> bool {
        match *self {
            Area::Circle { center, radius } => center.distance(p) <= radius,
            Area::Rect { min, max } => p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y,
        }
    }
}

/// `[adhoc]` block of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct AdhocConfig {
    pub range: f64,
    pub t_max: SimDuration,
    pub ttl: u32,
    pub hop_latency: SimDuration,
    /// Index into `nodes` of the broadcast source.
    pub origin: usize,
    pub gateway: Option<usize>,
    pub area: Option<Area>,
    pub nodes: Vec<(String, Point2D)>,
}

impl AdhocConfig {
    pub fn topology(&self, obstacles: &[Obstacle]) -> Topology {
        Topology::new(self.nodes.iter().map(|n| n.1).collect(), self.range, obstacles.to_vec())
    }

    pub fn message(&self) -> BroadcastMessage {
        BroadcastMessage {
            msg_id: 1,
            origin: self.nodes[self.origin].1,
            ttl: self.ttl,
            area: self.area,
            payload_len: 64,
        }
    }

    pub fn backoff(&self) -> BackoffParams {
        BackoffParams {
            t_max: self.t_max.as_secs_f64(),
            nominal_range: self.range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastMessage {
    pub msg_id: u64,
    pub origin: Point2D,
    pub ttl: u32,
    pub area: Option<Area>,
    pub payload_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackoffParams {
    /// Seconds.
    pub t_max: f64,
    /// Meters.
    pub nominal_range: f64,
}

impl Default for BackoffParams {
    fn default() -> Self {
        BackoffParams {
            t_max: 0.1,
            nominal_range: 100.0,
        }
    }
}

/// Wait before relaying, in seconds: `t_max * (1 - d / R)`, 0 beyond `R`.
pub fn forward_delay(d: f64, params: &BackoffParams) -> f64 {
    if d >= params.nominal_range {
        return 0.0;
    }
    params.t_max * (1.0 - d.max(0.0) / params.nominal_range)
}

/// Static node placement with a binary disc radio.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub positions: Vec<Point2D>,
    pub range: f64,
    pub obstacles: Vec<Obstacle>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(positions: Vec<Point2D>, range: f64, obstacles: Vec<Obstacle>) -> Self {
        let n = positions.len();
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j
                    && positions[i].distance(positions[j]) <= range
                    && !segment_blocked(positions[i], positions[j], &obstacles)
                {
                    neighbors[i].push(j);
                }
            }
        }
        Topology {
            positions,
            range,
            obstacles,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &m in &self.neighbors[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// True if some three nodes are pairwise in range.
    pub fn has_triangle(&self) -> bool {
        (0..self.len()).any(|a| {
            self.neighbors[a].iter().any(|&b| {
                b > a
                    && self.neighbors[b]
                        .iter()
                        .any(|&c| c > b && self.neighbors[a].contains(&c))
            })
        })
    }
}

/// When a node that is waiting to relay cancels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Suppression {
    /// Cancel on the first overheard duplicate.
    AnyDuplicate,
    /// Cancel once the transmitters overheard so far reach every neighbor.
    #[default]
    NeighborCoverage,
}

#[derive(Debug, Clone)]
enum BcastEvent {
    Receive { from: usize, ttl: u32 },
    Relay { ttl: u32 },
}

impl EventPayload for BcastEvent {
    fn kind(&self) -> &'static str {
        match self {
            BcastEvent::Receive { .. } => "bcast-rx",
            BcastEvent::Relay { .. } => "bcast-tx",
        }
    }

    fn detail(&self) -> String {
        match self {
            BcastEvent::Receive { from, ttl } => format!("from={from} ttl={ttl}"),
            BcastEvent::Relay { ttl } => format!("ttl={ttl}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BroadcastOutcome {
    pub delivered_at: Vec<Option<SimTime>>,
    /// Transmitting nodes in order, origin first.
    pub transmitters: Vec<usize>,
    pub log: EventLog,
}

impl BroadcastOutcome {
    pub fn transmissions(&self) -> usize {
        self.transmitters.len()
    }

    pub fn delivered_count(&self) -> usize {
        self.delivered_at.iter().filter(|d| d.is_some()).count()
    }

    pub fn all_delivered(&self) -> bool {
        self.delivered_at.iter().all(Option::is_some)
    }
}

/// Per-node relay decision state.
#[derive(Debug, Clone, Default)]
struct NodeState {
    seen: bool,
    pending: Option<crate::engine::EventHandle>,
    /// Transmitters this node has heard the message from.
    heard: Vec<usize>,
}

fn neighbors_covered(topo: &Topology, node: usize, heard: &[usize]) -> bool {
    topo.neighbors(node)
        .iter()
        .all(|&n| heard.iter().any(|&t| t == n || topo.neighbors(t).contains(&n)))
}

/// Runs one broadcast from `origin` to quiescence.
pub fn simulate_broadcast(
    topo: &Topology,
    origin: usize,
    msg: &BroadcastMessage,
    backoff: &BackoffParams,
    hop_latency: SimDuration,
    rule: Suppression,
) -> BroadcastOutcome {
    let mut engine: Engine<BcastEvent> = Engine::new();
    let ids: Vec<_> = (0..topo.len())
        .map(|i| engine.register_entity(format!("node{i}")))
        .collect();
    let mut nodes = vec![NodeState::default(); topo.len()];
    let mut delivered_at = vec![None; topo.len()];
    let mut transmitters = Vec::new();

    nodes[origin].seen = true;
    delivered_at[origin] = Some(SimTime::ZERO);
    engine
        .schedule(SimTime::ZERO, ids[origin], BcastEvent::Relay { ttl: msg.ttl })
        .expect("time zero is never in the past");

    let node_of = |id: crate::engine::EntityId| id.index();
    engine
        .run_until(SimTime::MAX, |eng, ev| {
            let n = node_of(ev.target);
            match ev.payload {
                BcastEvent::Relay { ttl } => {
                    nodes[n].pending = None;
                    transmitters.push(n);
                    for &m in topo.neighbors(n) {
                        let rx = BcastEvent::Receive {
                            from: n,
                            ttl: ttl.saturating_sub(1),
                        };
                        eng.schedule_in(hop_latency, ids[m], rx);
                    }
                }
                BcastEvent::Receive { from, ttl } => {
                    let st = &mut nodes[n];
                    st.heard.push(from);
                    if st.seen {
                        if let Some(h) = st.pending {
                            let cancel = match rule {
                                Suppression::AnyDuplicate => true,
                                Suppression::NeighborCoverage => neighbors_covered(topo, n, &st.heard),
                            };
                            if cancel {
                                eng.cancel(h);
                                st.pending = None;
                                eng.record(ev.target, "bcast-suppress", format!("dup_from={from}"));
                            }
                        }
                        return Ok(());
                    }
                    st.seen = true;
                    delivered_at[n] = Some(eng.now());
                    eng.record(ev.target, "bcast-deliver", format!("from={from}"));
                    let pos = topo.positions[n];
                    let inside = msg.area.is_none_or(|a| a.contains(pos));
                    let dead_end = topo.neighbors(n).iter().all(|&m| m == from);
                    if ttl > 0 && inside && !dead_end {
                        let d = pos.distance(topo.positions[from]);
                        let wait = SimDuration::from_secs_f64(forward_delay(d, backoff));
                        st.pending = Some(eng.schedule_in(wait, ev.target, BcastEvent::Relay { ttl }));
                    }
                }
            }
            Ok(())
        })
        .expect("broadcast handler never fails");

    BroadcastOutcome {
        delivered_at,
        transmitters,
        log: engine.into_log(),
    }
}

/// Neighbor strictly closer to `target` than `node`, minimising the remaining
/// distance; `None` at a local minimum.
pub fn greedy_next_hop(topo: &Topology, node: usize, target: Point2D) -> Option<usize> {
    let here = topo.positions[node].distance(target);
    topo.neighbors(node)
        .iter()
        .copied()
        .filter(|&m| topo.positions[m].distance(target) < here)
        .min_by(|&a, &b| {
            let da = topo.positions[a].distance(target);
            let db = topo.positions[b].distance(target);
            da.total_cmp(&db).then(a.cmp(&b))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no route: greedy relay stuck at node {stuck_at}")]
pub struct NoRoute {
    pub stuck_at: usize,
}

/// Relays greedily from `src` until a node is covered by `gateway`. The
/// returned list holds the nodes visited, so the hop count to the AP is
/// `len()` (one wireless hop per node, the last one into the AP).
pub fn route_to_gateway(topo: &Topology, src: usize, gateway: &AccessPoint) -> Result<Vec<usize>, NoRoute> {
    let mut path = vec![src];
    let mut at = src;
    loop {
        if crate::world::covered(topo.positions[at], gateway, &topo.obstacles) {
            return Ok(path);
        }
        match greedy_next_hop(topo, at, gateway.position) {
            Some(next) => {
                path.push(next);
                at = next;
            }
            None => return Err(NoRoute { stuck_at: at }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, spacing: f64) -> Topology {
        let pts = (0..n).map(|i| Point2D::new(i as f64 * spacing, 0.0)).collect();
        Topology::new(pts, 100.0, Vec::new())
    }

    fn msg(ttl: u32) -> BroadcastMessage {
        BroadcastMessage {
            msg_id: 1,
            origin: Point2D::new(0.0, 0.0),
            ttl,
            area: None,
            payload_len: 10,
        }
    }

    #[test]
    fn delay_formula() {
        let p = BackoffParams::default();
        assert_eq!(forward_delay(100.0, &p), 0.0);
        assert_eq!(forward_delay(0.0, &p), 0.1);
        assert!((forward_delay(50.0, &p) - 0.05).abs() < 1e-12);
        assert_eq!(forward_delay(250.0, &p), 0.0);
    }

    #[test]
    fn line_of_three_needs_two_transmissions() {
        let t = line(3, 90.0);
        let out = simulate_broadcast(
            &t,
            0,
            &msg(5),
            &BackoffParams::default(),
            SimDuration::ZERO,
            Suppression::default(),
        );
        assert!(out.all_delivered());
        assert_eq!(out.transmitters, vec![0, 1]);
    }

    #[test]
    fn ttl_zero_receiver_never_forwards() {
        let t = line(3, 90.0);
        let out = simulate_broadcast(
            &t,
            0,
            &msg(1),
            &BackoffParams::default(),
            SimDuration::ZERO,
            Suppression::default(),
        );
        assert_eq!(out.transmitters, vec![0]);
        assert!(out.delivered_at[1].is_some());
        assert!(out.delivered_at[2].is_none());
    }

    #[test]
    fn outside_area_never_forwards() {
        let t = line(3, 90.0);
        let mut m = msg(5);
        m.area = Some(Area::Rect {
            min: Point2D::new(-1.0, -1.0),
            max: Point2D::new(10.0, 1.0),
        });
        let out = simulate_broadcast(
            &t,
            0,
            &m,
            &BackoffParams::default(),
            SimDuration::ZERO,
            Suppression::default(),
        );
        assert_eq!(out.transmitters, vec![0]);
        assert!(out.delivered_at[1].is_some());
    }

    #[test]
    fn clique_has_one_forwarder() {
        let pts = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(10.0, 0.0),
            Point2D::new(0.0, 20.0),
            Point2D::new(30.0, 30.0),
        ];
        let t = Topology::new(pts, 100.0, Vec::new());
        for rule in [Suppression::AnyDuplicate, Suppression::NeighborCoverage] {
            let out = simulate_broadcast(&t, 0, &msg(5), &BackoffParams::default(), SimDuration::ZERO, rule);
            assert!(out.all_delivered());
            assert_eq!(out.transmitters, vec![0, 3], "{rule:?}");
        }
    }

    #[test]
    fn disconnected_node_never_delivers() {
        let t = Topology::new(
            vec![Point2D::new(0.0, 0.0), Point2D::new(500.0, 0.0)],
            100.0,
            Vec::new(),
        );
        let out = simulate_broadcast(
            &t,
            0,
            &msg(5),
            &BackoffParams::default(),
            SimDuration::ZERO,
            Suppression::default(),
        );
        assert!(out.delivered_at[1].is_none());
        assert_eq!(out.transmissions(), 1);
    }

    #[test]
    fn greedy_rules() {
        let t = line(4, 80.0);
        assert_eq!(greedy_next_hop(&t, 0, Point2D::new(80.0, 0.0)), Some(1));
        assert_eq!(greedy_next_hop(&t, 0, Point2D::new(-50.0, 0.0)), None);
        let ap = AccessPoint {
            id: "gw".into(),
            position: Point2D::new(300.0, 0.0),
            range: 70.0,
            wlan_id: "w".into(),
            wired_latency_to_internet: 0.0,
        };
        let route = route_to_gateway(&t, 0, &ap).unwrap();
        assert_eq!(route, vec![0, 1, 2, 3]);
        assert_eq!(route.len(), 4);
    }
}
