//! The mobile-node simulation.
//!
//! One run follows a single mobile node along the scenario path while a
//! constant-rate uplink source sends datagrams to a correspondent node. Under
//! ABPS the node has two NICs driven by the proxy client; under the baselines
//! it has one NIC and runs the MIPv6 or LISP procedure after every
//! re-association.
//!
//! Entities: `world` (coverage changes), `mn` (traffic source), `nic0`,
//! `nic1`, one per AP, `proxy`, `cn`, plus the baseline control peers (`ar`,
//! `ha` for MIPv6; `map-system`, `etr`, `itr` for LISP).

use std::collections::{BTreeMap, BTreeSet};

use crate::abps::{
    select_nic_sticky, sign, Datagram, DatagramKind, Direction, FlowKey, ProxyServer, QosMonitor, ServerVerdict,
};
use crate::engine::{Engine, EntityId, EventHandle, EventLog, EventPayload};
use crate::link::{frame_fate, FrameOutcome, LinkState, Locator, NicState};
use crate::lisp::{LispClient, LispStep};
use crate::metrics::{DowntimeRecord, DowntimeTracker, TraceEvent};
use crate::mipv6::{Mipv6Client, Mipv6Step, SendPath};
use crate::rng::RngStream;
use crate::scenario::Scenario;
use crate::time::{SimDuration, SimTime};
use crate::world::{covered, CoverageMap, Obstacle};
use crate::{Protocol, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Mipv6(Mipv6Step),
    Lisp(LispStep),
}

impl Step {
    fn kind(self) -> &'static str {
        match self {
            Step::Mipv6(s) => s.kind(),
            Step::Lisp(s) => s.kind(),
        }
    }

    fn peer(self) -> &'static str {
        match self {
            Step::Mipv6(s) => s.peer(),
            Step::Lisp(s) => s.peer(),
        }
    }
}

fn kind_name(k: DatagramKind) -> &'static str {
    match k {
        DatagramKind::Data => "data",
        DatagramKind::Probe => "probe",
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Coverage {
        ap: Option<usize>,
        covered: bool,
        set: u64,
    },
    Scan {
        nic: usize,
        epoch: u64,
    },
    AssocDone {
        nic: usize,
        epoch: u64,
    },
    ConfigDone {
        nic: usize,
        epoch: u64,
    },
    LinkLoss {
        nic: usize,
        epoch: u64,
    },
    Keepalive {
        nic: usize,
        epoch: u64,
    },
    Traffic,
    Retransmit {
        seq: u64,
    },
    Retry,
    Ack {
        nic: usize,
        ap: usize,
        frame: u64,
        seq: u64,
        kind: DatagramKind,
        tx: SimTime,
    },
    Timeout {
        nic: usize,
        frame: u64,
        seq: u64,
        kind: DatagramKind,
        tx: SimTime,
    },
    ProxyRx {
        nic: usize,
        seq: u64,
        src: Locator,
    },
    Deliver {
        seq: u64,
    },
    Step {
        step: Step,
        epoch: u64,
    },
}

fn set_text(set: u64) -> String {
    if set == 0 {
        return "-".into();
    }
    (0..64)
        .filter(|i| set & (1 << i) != 0)
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

impl EventPayload for Ev {
    fn kind(&self) -> &'static str {
        match self {
            Ev::Coverage { .. } => "coverage",
            Ev::Scan { .. } => "scan",
            Ev::AssocDone { .. } => "assoc-done",
            Ev::ConfigDone { .. } => "config-done",
            Ev::LinkLoss { .. } => "link-loss",
            Ev::Keepalive { .. } => "keepalive",
            Ev::Traffic => "app-send",
            Ev::Retransmit { .. } => "retransmit",
            Ev::Retry => "retry",
            Ev::Ack { .. } => "ack",
            Ev::Timeout { .. } => "timeout",
            Ev::ProxyRx { .. } => "proxy-rx",
            Ev::Deliver { .. } => "deliver",
            Ev::Step { step, .. } => step.kind(),
        }
    }

    fn detail(&self) -> String {
        match self {
            Ev::Coverage { ap, covered, set } => match ap {
                Some(ap) => format!("ap={ap} covered={} set={}", u8::from(*covered), set_text(*set)),
                None => format!("ap=- covered=- set={}", set_text(*set)),
            },
            Ev::Scan { nic, .. }
            | Ev::AssocDone { nic, .. }
            | Ev::ConfigDone { nic, .. }
            | Ev::LinkLoss { nic, .. }
            | Ev::Keepalive { nic, .. } => format!("nic={nic}"),
            Ev::Traffic | Ev::Retry => String::new(),
            Ev::Retransmit { seq } | Ev::Deliver { seq } => format!("seq={seq}"),
            Ev::Ack {
                nic, ap, seq, kind, tx, ..
            } => format!(
                "nic={nic} seq={seq} kind={} tx_us={} ap={ap}",
                kind_name(*kind),
                tx.as_micros()
            ),
            Ev::Timeout { nic, seq, kind, tx, .. } => {
                format!("nic={nic} seq={seq} kind={} tx_us={}", kind_name(*kind), tx.as_micros())
            }
            Ev::ProxyRx { nic, seq, src } => format!("nic={nic} seq={seq} src={src}"),
            Ev::Step { epoch, .. } => format!("epoch={epoch}"),
        }
    }
}

/// Counters collected during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub datagrams: u64,
    pub data_frames: u64,
    pub probe_frames: u64,
    pub retransmissions: u64,
    pub data_timeouts: u64,
    pub link_ups: u64,
    pub link_downs: u64,
    pub relayed: u64,
    pub dup_drops: u64,
    pub auth_drops: u64,
    pub procedure_aborts: u64,
    /// Correspondent receipts per seq; index 0 is seq 1.
    pub cn_receipts: Vec<u32>,
}

impl RunStats {
    pub fn cn_duplicates(&self) -> u64 {
        self.cn_receipts.iter().map(|&c| u64::from(c.saturating_sub(1))).sum()
    }

    pub fn cn_delivered(&self) -> u64 {
        self.cn_receipts.iter().filter(|&&c| c > 0).count() as u64
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub protocol: Protocol,
    pub seed: u64,
    pub end: SimTime,
    pub log: EventLog,
    pub downtimes: Vec<DowntimeRecord>,
    pub stats: RunStats,
}

impl RunOutput {
    /// Checks properties every run must satisfy.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        for w in self.downtimes.windows(2) {
            if w[1].start < w[0].end {
                return Err(SimError::Invariant(format!(
                    "downtime records {} and {} overlap",
                    w[0].handover_index, w[1].handover_index
                )));
            }
        }
        if self.protocol == Protocol::Abps && self.stats.cn_duplicates() > 0 {
            return Err(SimError::Invariant(format!(
                "correspondent received {} duplicate datagrams",
                self.stats.cn_duplicates()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    nic: usize,
    seq: u64,
    kind: DatagramKind,
    tx: SimTime,
    ack: Option<EventHandle>,
}

enum Baseline {
    None,
    Mipv6(Mipv6Client),
    Lisp(LispClient),
}

struct Sim<'a> {
    sc: &'a Scenario,
    protocol: Protocol,
    obstacles: Vec<Obstacle>,
    mn: EntityId,
    nic_ids: Vec<EntityId>,
    proxy_id: EntityId,
    cn: EntityId,
    peers: Vec<(&'static str, EntityId)>,

    nics: Vec<NicState>,
    epochs: Vec<u64>,
    link_loss: Vec<Option<EventHandle>>,
    keepalive: Vec<Option<(EventHandle, SimTime)>>,
    addr_serial: u32,

    qos: QosMonitor,
    current: Option<usize>,
    key: FlowKey,
    proxy: ProxyServer,
    outbox: Vec<Datagram>,
    next_probe: u64,

    baseline: Baseline,
    restart_pending: bool,
    ra_rng: RngStream,
    retry_armed: bool,

    inflight: BTreeMap<u64, InFlight>,
    next_frame: u64,
    queue: BTreeSet<u64>,
    tracker: DowntimeTracker,
    stats: RunStats,
}

/// Simulates one (scenario, protocol, seed) run, computing the coverage map.
pub fn simulate(sc: &Scenario, protocol: Protocol, seed: u64) -> Result<RunOutput, SimError> {
    simulate_with(sc, &sc.coverage_map(), protocol, seed)
}

/// Simulates one run on a precomputed coverage map.
pub fn simulate_with(sc: &Scenario, map: &CoverageMap, protocol: Protocol, seed: u64) -> Result<RunOutput, SimError> {
    if sc.access_points.len() > 64 {
        return Err(SimError::Invariant("at most 64 access points are supported".into()));
    }
    let mut eng: Engine<Ev> = Engine::new();
    let world = eng.register_entity("world");
    let mn = eng.register_entity("mn");
    let nic_count = if protocol == Protocol::Abps { 2 } else { 1 };
    let nic_ids: Vec<_> = (0..nic_count).map(|i| eng.register_entity(format!("nic{i}"))).collect();
    for ap in &sc.access_points {
        eng.register_entity(ap.id.clone());
    }
    let proxy_id = eng.register_entity("proxy");
    let cn = eng.register_entity("cn");
    let peer_names: &[&'static str] = match protocol {
        Protocol::Abps => &[],
        Protocol::Mipv6 => &["ar", "ha"],
        Protocol::Lisp => &["map-system", "etr", "itr"],
    };
    let peers = peer_names.iter().map(|&n| (n, eng.register_entity(n))).collect();

    let flow = sc.traffic.flow_id;
    let key = FlowKey::derive(&sc.traffic.key_secret, flow);
    let mut proxy = ProxyServer::new(sc.abps.seq_window);
    proxy.add_flow(flow, key.clone(), "cn");
    let baseline = match protocol {
        Protocol::Abps => Baseline::None,
        Protocol::Mipv6 => Baseline::Mipv6(Mipv6Client::new(sc.mipv6)),
        Protocol::Lisp => Baseline::Lisp(LispClient::new(sc.lisp, flow.0)),
    };

    let mut sim = Sim {
        sc,
        protocol,
        obstacles: sc.obstacle_shapes(),
        mn,
        nic_ids,
        proxy_id,
        cn,
        peers,
        nics: (0..nic_count).map(NicState::new).collect(),
        epochs: vec![0; nic_count],
        link_loss: vec![None; nic_count],
        keepalive: vec![None; nic_count],
        addr_serial: 0,
        qos: QosMonitor::new(nic_count, sc.abps.failure_threshold),
        current: None,
        key,
        proxy,
        outbox: Vec::new(),
        next_probe: 0,
        baseline,
        restart_pending: false,
        ra_rng: RngStream::new(seed, "mipv6"),
        retry_armed: false,
        inflight: BTreeMap::new(),
        next_frame: 0,
        queue: BTreeSet::new(),
        tracker: DowntimeTracker::new(protocol, seed, flow.0),
        stats: RunStats::default(),
    };

    let end = sc.run.duration;
    eng.record(
        world,
        "run",
        format!(
            "protocol={protocol} seed={seed} flow={} end_us={}",
            flow.0,
            end.as_micros()
        ),
    );

    // Coverage changes are known up front.
    let mut set: u64 = map
        .initial
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .fold(0, |acc, (i, _)| acc | (1 << i));
    eng.schedule(
        SimTime::ZERO,
        world,
        Ev::Coverage {
            ap: None,
            covered: false,
            set,
        },
    )?;
    for tr in &map.transitions {
        if tr.covered {
            set |= 1 << tr.ap;
        } else {
            set &= !(1 << tr.ap);
        }
        if tr.time <= end {
            eng.schedule(
                tr.time,
                world,
                Ev::Coverage {
                    ap: Some(tr.ap),
                    covered: tr.covered,
                    set,
                },
            )?;
        }
    }

    for nic in 0..nic_count {
        sim.nics[nic].power_on();
        eng.schedule(SimTime::ZERO, sim.nic_ids[nic], Ev::Scan { nic, epoch: 0 })?;
    }
    let mut phase = RngStream::new(seed, "traffic");
    let first = sc.traffic.start + phase.uniform_duration(sc.traffic.interval);
    if first < end {
        eng.schedule(first, mn, Ev::Traffic)?;
    }

    eng.run_until(end, |eng, ev| sim.handle(eng, ev.payload))?;

    let Sim {
        tracker,
        mut stats,
        proxy,
        ..
    } = sim;
    let ps = proxy.stats();
    stats.relayed = ps.relayed;
    stats.dup_drops = ps.dup_drops;
    stats.auth_drops = ps.auth_drops;
    Ok(RunOutput {
        protocol,
        seed,
        end,
        log: eng.into_log(),
        downtimes: tracker.finish(end),
        stats,
    })
}

impl Sim<'_> {
    fn covered_now(&self, ap: usize, t: SimTime) -> bool {
        covered(
            self.sc.mobile_path().position_at(t),
            &self.sc.access_points[ap],
            &self.obstacles,
        )
    }

    fn peer(&self, name: &str) -> EntityId {
        if name == "cn" {
            return self.cn;
        }
        self.peers
            .iter()
            .find(|(n, _)| *n == name)
            .map(|p| p.1)
            .expect("peer registered for this protocol")
    }

    fn handle(&mut self, eng: &mut Engine<Ev>, ev: Ev) -> Result<(), SimError> {
        let now = eng.now();
        match ev {
            Ev::Coverage { ap, covered, set } => {
                self.tracker.observe(now, TraceEvent::Coverage { empty: set == 0 });
                if let Some(ap) = ap {
                    self.on_coverage(eng, ap, covered)?;
                }
            }
            Ev::Scan { nic, epoch } => {
                if epoch == self.epochs[nic] && self.nics[nic].is_scanning() {
                    self.scan(eng, nic)?;
                }
            }
            Ev::AssocDone { nic, epoch } => {
                if epoch != self.epochs[nic] {
                    return Ok(());
                }
                let ap = self.nics[nic].association_complete()?;
                if !self.covered_now(ap, now) {
                    return self.link_down(eng, nic);
                }
                eng.schedule_in(
                    self.sc.link.address_config_delay,
                    self.nic_ids[nic],
                    Ev::ConfigDone { nic, epoch },
                );
            }
            Ev::ConfigDone { nic, epoch } => {
                if epoch != self.epochs[nic] {
                    return Ok(());
                }
                let LinkState::Configuring { ap } = self.nics[nic].state() else {
                    return Err(SimError::Invariant(format!(
                        "nic{nic} configured while not configuring"
                    )));
                };
                if !self.covered_now(ap, now) {
                    return self.link_down(eng, nic);
                }
                self.addr_serial += 1;
                let addr = Locator::new(ap, self.addr_serial);
                self.nics[nic].configuration_complete(addr)?;
                self.stats.link_ups += 1;
                eng.record(
                    self.nic_ids[nic],
                    "link-up",
                    format!("nic={nic} ap={} addr={addr}", self.sc.access_points[ap].id),
                );
                self.on_up(eng, nic)?;
            }
            Ev::LinkLoss { nic, epoch } => {
                if epoch == self.epochs[nic] {
                    self.link_loss[nic] = None;
                    if self.nics[nic].is_up() {
                        self.link_down(eng, nic)?;
                    }
                }
            }
            Ev::Keepalive { nic, epoch } => {
                if epoch == self.epochs[nic] && self.nics[nic].is_up() {
                    self.keepalive[nic] = None;
                    let seq = self.next_probe;
                    self.next_probe += 1;
                    self.transmit(eng, nic, seq, DatagramKind::Probe)?;
                    let gap = if self.qos.any_usable() {
                        self.sc.abps.keepalive_interval
                    } else {
                        self.sc.abps.retry_interval
                    };
                    self.arm_keepalive(eng, nic, gap);
                }
            }
            Ev::Traffic => {
                let seq = self.outbox.len() as u64 + 1;
                let payload = payload_bytes(seq, self.sc.traffic.payload_len);
                let mut d = Datagram::new(self.sc.traffic.flow_id, seq, Direction::Up, &payload);
                d.auth_tag = sign(&d, &self.key);
                self.outbox.push(d);
                self.stats.datagrams += 1;
                self.stats.cn_receipts.push(0);
                self.send_new(eng, seq)?;
                let next = now + self.sc.traffic.interval;
                if next < self.sc.run.duration {
                    eng.schedule(next, self.mn, Ev::Traffic)?;
                }
            }
            Ev::Retransmit { seq } => self.abps_send(eng, seq)?,
            Ev::Retry => {
                self.retry_armed = false;
                if self.baseline_ready() {
                    if let Some(seq) = self.queue.pop_first() {
                        self.transmit(eng, 0, seq, DatagramKind::Data)?;
                    }
                    if !self.queue.is_empty() {
                        self.arm_retry(eng);
                    }
                }
            }
            Ev::Ack { nic, frame, tx, .. } => {
                self.inflight.remove(&frame);
                if self.protocol == Protocol::Abps {
                    if self.nics[nic].is_up() {
                        self.qos.on_ack(nic, now, now - tx);
                    }
                    self.abps_drain(eng)?;
                } else {
                    self.baseline_drain(eng)?;
                }
            }
            Ev::Timeout {
                nic,
                frame,
                seq,
                kind,
                tx,
            } => {
                self.inflight.remove(&frame);
                self.on_timeout(eng, nic, seq, kind, tx)?;
            }
            Ev::ProxyRx { nic, seq, src } => {
                let mut d = self.outbox[(seq - 1) as usize].clone();
                d.src_locator = Some(src);
                d.hop_trace = vec![self.nic_ids[nic].index() as u32, self.proxy_id.index() as u32];
                match self.proxy.receive(&d) {
                    ServerVerdict::Relay(_) => {
                        eng.record(self.proxy_id, "relay", format!("seq={seq} src={src}"));
                        eng.schedule_in(self.sc.abps.proxy_to_correspondent, self.cn, Ev::Deliver { seq });
                    }
                    ServerVerdict::DropDuplicate(_) => {
                        eng.record(self.proxy_id, "drop-dup", format!("seq={seq}"));
                    }
                    ServerVerdict::DropAuth(r) => {
                        eng.record(self.proxy_id, "drop-auth", format!("seq={seq} reason={r:?}"));
                    }
                    ServerVerdict::Probe(_) => {}
                }
            }
            Ev::Deliver { seq } => {
                self.stats.cn_receipts[(seq - 1) as usize] += 1;
                self.tracker.observe(now, TraceEvent::Deliver { seq });
            }
            Ev::Step { step, epoch } => self.on_step(eng, step, epoch)?,
        }
        Ok(())
    }

    fn on_coverage(&mut self, eng: &mut Engine<Ev>, ap: usize, is_covered: bool) -> Result<(), SimError> {
        for nic in 0..self.nics.len() {
            if self.nics[nic].claimed_ap() != Some(ap) {
                continue;
            }
            match (self.nics[nic].state(), is_covered) {
                (LinkState::Associating { .. } | LinkState::Configuring { .. }, false) => {
                    self.link_down(eng, nic)?;
                }
                (LinkState::Up { .. }, false) => {
                    if self.link_loss[nic].is_none() {
                        let epoch = self.epochs[nic];
                        let h = eng.schedule_in(
                            self.sc.link.link_loss_timeout,
                            self.nic_ids[nic],
                            Ev::LinkLoss { nic, epoch },
                        );
                        self.link_loss[nic] = Some(h);
                    }
                }
                (LinkState::Up { .. }, true) => {
                    if let Some(h) = self.link_loss[nic].take() {
                        eng.cancel(h);
                    }
                    if self.restart_pending {
                        self.start_procedure(eng)?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn scan(&mut self, eng: &mut Engine<Ev>, nic: usize) -> Result<(), SimError> {
        let now = eng.now();
        let here = self.sc.mobile_path().position_at(now);
        let taken: Vec<usize> = (0..self.nics.len())
            .filter(|&n| n != nic)
            .filter_map(|n| self.nics[n].claimed_ap())
            .collect();
        let choice = self
            .sc
            .access_points
            .iter()
            .enumerate()
            .filter(|(i, ap)| !taken.contains(i) && covered(here, ap, &self.obstacles))
            .min_by(|(i, a), (j, b)| {
                a.position
                    .distance(here)
                    .total_cmp(&b.position.distance(here))
                    .then(i.cmp(j))
            })
            .map(|(i, _)| i);
        let epoch = self.epochs[nic];
        match choice {
            Some(ap) => {
                self.nics[nic].begin_association(ap)?;
                eng.schedule_in(
                    self.sc.link.association_delay,
                    self.nic_ids[nic],
                    Ev::AssocDone { nic, epoch },
                );
            }
            None => {
                eng.schedule_in(self.sc.link.scan_interval, self.nic_ids[nic], Ev::Scan { nic, epoch });
            }
        }
        Ok(())
    }

    fn link_down(&mut self, eng: &mut Engine<Ev>, nic: usize) -> Result<(), SimError> {
        let now = eng.now();
        let was_up = self.nics[nic].is_up();
        if !self.nics[nic].link_down() {
            return Ok(());
        }
        self.epochs[nic] += 1;
        self.stats.link_downs += 1;
        if let Some(h) = self.link_loss[nic].take() {
            eng.cancel(h);
        }
        if let Some((h, _)) = self.keepalive[nic].take() {
            eng.cancel(h);
        }
        eng.record(
            self.nic_ids[nic],
            "link-down",
            format!("nic={nic} was_up={}", u8::from(was_up)),
        );

        // Frames still waiting for an ACK on this NIC resolve as timeouts.
        let frames: Vec<u64> = self
            .inflight
            .iter()
            .filter(|(_, f)| f.nic == nic && f.ack.is_some())
            .map(|(&id, _)| id)
            .collect();
        for frame in frames {
            let f = self.inflight.get_mut(&frame).expect("frame listed above");
            eng.cancel(f.ack.take().expect("filtered on pending ack"));
            let at = (f.tx + self.sc.link.ack_timeout).max(now);
            let ev = Ev::Timeout {
                nic,
                frame,
                seq: f.seq,
                kind: f.kind,
                tx: f.tx,
            };
            eng.schedule(at, self.nic_ids[nic], ev)?;
        }

        match &mut self.baseline {
            Baseline::None => {
                self.qos.set_up(nic, false);
                if self.current == Some(nic) {
                    self.current = None;
                }
            }
            Baseline::Mipv6(c) => c.on_link_down(),
            Baseline::Lisp(c) => c.on_link_down(),
        }
        if self.protocol != Protocol::Abps {
            self.restart_pending = false;
        }
        let epoch = self.epochs[nic];
        eng.schedule(now, self.nic_ids[nic], Ev::Scan { nic, epoch })?;
        Ok(())
    }

    fn on_up(&mut self, eng: &mut Engine<Ev>, nic: usize) -> Result<(), SimError> {
        if self.protocol == Protocol::Abps {
            self.qos.set_up(nic, true);
            self.arm_keepalive(eng, nic, SimDuration::ZERO);
            self.abps_drain(eng)
        } else {
            self.start_procedure(eng)
        }
    }

    fn arm_keepalive(&mut self, eng: &mut Engine<Ev>, nic: usize, after: SimDuration) {
        let epoch = self.epochs[nic];
        let at = eng.now() + after;
        let h = eng.schedule_in(after, self.nic_ids[nic], Ev::Keepalive { nic, epoch });
        self.keepalive[nic] = Some((h, at));
    }

    /// Switches every Up NIC to fast probing once nothing is usable.
    fn hasten_probes(&mut self, eng: &mut Engine<Ev>) {
        let soon = eng.now() + self.sc.abps.retry_interval;
        for nic in 0..self.nics.len() {
            if let Some((h, at)) = self.keepalive[nic] {
                if at > soon {
                    eng.cancel(h);
                    self.arm_keepalive(eng, nic, self.sc.abps.retry_interval);
                }
            }
        }
    }

    fn transmit(&mut self, eng: &mut Engine<Ev>, nic: usize, seq: u64, kind: DatagramKind) -> Result<(), SimError> {
        let LinkState::Up { ap, address } = self.nics[nic].state() else {
            return Err(SimError::NicNotUp { nic });
        };
        let tx = eng.now();
        let fate = frame_fate(tx, &self.sc.link, |t| self.covered_now(ap, t));
        let frame = self.next_frame;
        self.next_frame += 1;
        match kind {
            DatagramKind::Data => self.stats.data_frames += 1,
            DatagramKind::Probe => self.stats.probe_frames += 1,
        }
        eng.record(
            self.nic_ids[nic],
            "send",
            format!("nic={nic} seq={seq} kind={} ap={ap} src={address}", kind_name(kind)),
        );
        if let (Some(arrival), DatagramKind::Data) = (fate.reached_ap, kind) {
            match self.protocol {
                Protocol::Abps => {
                    let at = arrival + self.sc.link.wired_rtt_to_proxy.halved();
                    eng.schedule(at, self.proxy_id, Ev::ProxyRx { nic, seq, src: address })?;
                }
                _ => {
                    let SendPath::Via(extra) = self.send_path() else {
                        return Err(SimError::Invariant("baseline sent data on a held path".into()));
                    };
                    let wired = SimDuration::from_secs_f64(self.sc.access_points[ap].wired_latency_to_internet);
                    eng.schedule(arrival + wired + extra, self.cn, Ev::Deliver { seq })?;
                }
            }
        }
        let ack = match fate.outcome {
            FrameOutcome::AckReceived { at } => Some(eng.schedule(
                at,
                self.nic_ids[nic],
                Ev::Ack {
                    nic,
                    ap,
                    frame,
                    seq,
                    kind,
                    tx,
                },
            )?),
            FrameOutcome::AckTimeout { at } => {
                eng.schedule(
                    at,
                    self.nic_ids[nic],
                    Ev::Timeout {
                        nic,
                        frame,
                        seq,
                        kind,
                        tx,
                    },
                )?;
                None
            }
        };
        self.inflight.insert(
            frame,
            InFlight {
                nic,
                seq,
                kind,
                tx,
                ack,
            },
        );
        Ok(())
    }

    fn on_timeout(
        &mut self,
        eng: &mut Engine<Ev>,
        nic: usize,
        seq: u64,
        kind: DatagramKind,
        tx: SimTime,
    ) -> Result<(), SimError> {
        let now = eng.now();
        if kind == DatagramKind::Data {
            self.stats.data_timeouts += 1;
            self.tracker.observe(now, TraceEvent::DataTimeout { seq, tx });
        }
        if self.protocol == Protocol::Abps {
            let usable_before = self.qos.any_usable();
            if self.nics[nic].is_up() {
                self.qos.on_failure(nic);
            }
            if usable_before && !self.qos.any_usable() {
                self.hasten_probes(eng);
            }
            if kind == DatagramKind::Data {
                self.stats.retransmissions += 1;
                let at = (tx + self.sc.abps.retry_interval).max(now);
                if at == now {
                    self.abps_send(eng, seq)?;
                } else {
                    eng.schedule(at, self.mn, Ev::Retransmit { seq })?;
                }
            }
        } else if kind == DatagramKind::Data {
            self.stats.retransmissions += 1;
            self.queue.insert(seq);
            self.arm_retry(eng);
        }
        Ok(())
    }

    fn send_new(&mut self, eng: &mut Engine<Ev>, seq: u64) -> Result<(), SimError> {
        if self.protocol == Protocol::Abps {
            if self.queue.is_empty() {
                self.abps_send(eng, seq)
            } else {
                self.queue.insert(seq);
                self.abps_drain(eng)
            }
        } else if self.queue.is_empty() && self.baseline_ready() {
            self.transmit(eng, 0, seq, DatagramKind::Data)
        } else {
            self.queue.insert(seq);
            self.arm_retry(eng);
            Ok(())
        }
    }

    // ---- ABPS client ----

    fn abps_send(&mut self, eng: &mut Engine<Ev>, seq: u64) -> Result<(), SimError> {
        match select_nic_sticky(&self.qos, self.current) {
            Some(nic) => {
                self.current = Some(nic);
                self.transmit(eng, nic, seq, DatagramKind::Data)
            }
            None => {
                self.queue.insert(seq);
                Ok(())
            }
        }
    }

    fn abps_drain(&mut self, eng: &mut Engine<Ev>) -> Result<(), SimError> {
        while let Some(&seq) = self.queue.first() {
            let Some(nic) = select_nic_sticky(&self.qos, self.current) else {
                break;
            };
            self.queue.pop_first();
            self.current = Some(nic);
            self.transmit(eng, nic, seq, DatagramKind::Data)?;
        }
        Ok(())
    }

    // ---- baselines ----

    fn send_path(&self) -> SendPath {
        match &self.baseline {
            Baseline::None => SendPath::Hold,
            Baseline::Mipv6(c) => c.send_path(),
            Baseline::Lisp(c) => c.send_path(),
        }
    }

    fn baseline_ready(&self) -> bool {
        self.nics[0].is_up() && self.send_path() != SendPath::Hold
    }

    fn arm_retry(&mut self, eng: &mut Engine<Ev>) {
        if !self.retry_armed && self.baseline_ready() {
            self.retry_armed = true;
            eng.schedule_in(self.sc.abps.retry_interval, self.mn, Ev::Retry);
        }
    }

    fn baseline_drain(&mut self, eng: &mut Engine<Ev>) -> Result<(), SimError> {
        if !self.baseline_ready() {
            return Ok(());
        }
        while let Some(seq) = self.queue.pop_first() {
            self.transmit(eng, 0, seq, DatagramKind::Data)?;
        }
        Ok(())
    }

    fn start_procedure(&mut self, eng: &mut Engine<Ev>) -> Result<(), SimError> {
        self.restart_pending = false;
        let Some(addr) = self.nics[0].local_address() else {
            return Ok(());
        };
        let (step, delay) = match &mut self.baseline {
            Baseline::None => return Ok(()),
            Baseline::Mipv6(c) => {
                let ra = self.ra_rng.uniform_duration(c.params().router_adv_interval);
                let (s, d) = c.start(addr, ra);
                (Step::Mipv6(s), d)
            }
            Baseline::Lisp(c) => {
                let (s, d) = c.start(addr);
                (Step::Lisp(s), d)
            }
        };
        let epoch = self.epochs[0];
        eng.schedule_in(delay, self.peer(step.peer()), Ev::Step { step, epoch });
        Ok(())
    }

    fn on_step(&mut self, eng: &mut Engine<Ev>, step: Step, epoch: u64) -> Result<(), SimError> {
        let running = match &self.baseline {
            Baseline::Mipv6(c) => c.running().map(Step::Mipv6),
            Baseline::Lisp(c) => c.running().map(Step::Lisp),
            Baseline::None => None,
        };
        if epoch != self.epochs[0] || running != Some(step) {
            return Ok(());
        }
        let ap = self.nics[0]
            .associated_ap()
            .expect("procedure runs only while attached");
        if !self.covered_now(ap, eng.now()) {
            match &mut self.baseline {
                Baseline::Mipv6(c) => c.abort(),
                Baseline::Lisp(c) => c.abort(),
                Baseline::None => {}
            }
            self.stats.procedure_aborts += 1;
            self.restart_pending = true;
            eng.record(self.mn, "procedure-abort", format!("step={}", step.kind()));
            return Ok(());
        }
        let next = match (&mut self.baseline, step) {
            (Baseline::Mipv6(c), Step::Mipv6(s)) => c.complete(s).map(|(n, d)| (Step::Mipv6(n), d)),
            (Baseline::Lisp(c), Step::Lisp(s)) => c.complete(s).map(|(n, d)| (Step::Lisp(n), d)),
            _ => None,
        };
        match next {
            Some((n, d)) => {
                eng.schedule_in(d, self.peer(n.peer()), Ev::Step { step: n, epoch });
            }
            None => {
                eng.record(self.mn, "procedure-done", format!("queued={}", self.queue.len()));
            }
        }
        // A home-only binding (no route optimisation) already carries data.
        self.baseline_drain(eng)
    }
}

fn payload_bytes(seq: u64, len: u32) -> Vec<u8> {
    seq.to_le_bytes().iter().copied().cycle().take(len as usize).collect()
}
