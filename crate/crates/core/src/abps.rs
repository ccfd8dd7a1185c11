//! ABPS proxy pair: datagram authentication, cross-layer QoS monitoring,
//! per-datagram NIC selection and the proxy server's identify/dedup/relay
//! logic.
//!
//! The mobile node's proxy client tags every datagram with a keyed
//! authenticator over `(flow_id, seq, direction, payload digest)`. The proxy
//! server recognises the sender from that tag alone, so the datagram's source
//! locator (which changes whenever the node switches interface or network) and
//! the path it took are irrelevant to identification.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use sha2::{Digest, Sha256};

use crate::link::Locator;
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatagramKind {
    Data,
    /// Zero-payload keepalive used to refresh per-NIC statistics.
    Probe,
}

pub type PayloadDigest = [u8; 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AuthTag(pub [u8; 16]);

/// Pre-shared per-flow key, configured statically at both proxies.
#[derive(Clone, PartialEq, Eq)]
pub struct FlowKey(pub Vec<u8>);

impl fmt::Debug for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FlowKey(..)")
    }
}

impl FlowKey {
    /// Deterministic key derived from a scenario secret and flow id.
    pub fn derive(secret: &str, flow: FlowId) -> Self {
        let mut h = Sha256::new();
        h.update(secret.as_bytes());
        h.update(flow.0.to_le_bytes());
        FlowKey(h.finalize().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    pub flow_id: FlowId,
    pub seq: u64,
    pub direction: Direction,
    pub kind: DatagramKind,
    pub payload_len: u32,
    pub payload_digest: PayloadDigest,
    pub src_locator: Option<Locator>,
    pub auth_tag: AuthTag,
    /// Entities traversed so far (node, relays, AP, ...).
    pub hop_trace: Vec<u32>,
}

pub fn payload_digest(payload: &[u8]) -> PayloadDigest {
    let d = Sha256::digest(payload);
    let mut out = [0u8; 16];
    out.copy_from_slice(&d[..16]);
    out
}

impl Datagram {
    /// Unsigned datagram; call [`sign`] before sending.
    pub fn new(flow_id: FlowId, seq: u64, direction: Direction, payload: &[u8]) -> Self {
        Datagram {
            flow_id,
            seq,
            direction,
            kind: DatagramKind::Data,
            payload_len: payload.len() as u32,
            payload_digest: payload_digest(payload),
            src_locator: None,
            auth_tag: AuthTag([0; 16]),
            hop_trace: Vec::new(),
        }
    }

    pub fn probe(flow_id: FlowId, seq: u64) -> Self {
        Datagram {
            kind: DatagramKind::Probe,
            ..Datagram::new(flow_id, seq, Direction::Up, &[])
        }
    }

    pub fn is_probe(&self) -> bool {
        self.kind == DatagramKind::Probe
    }

    /// The bytes covered by the authenticator. Locator and hop trace are
    /// deliberately absent.
    fn signed_bytes(&self) -> [u8; 34] {
        let mut b = [0u8; 34];
        b[0..4].copy_from_slice(&self.flow_id.0.to_le_bytes());
        b[4..12].copy_from_slice(&self.seq.to_le_bytes());
        b[12] = match self.direction {
            Direction::Up => 0,
            Direction::Down => 1,
        };
        b[13] = match self.kind {
            DatagramKind::Data => 0,
            DatagramKind::Probe => 1,
        };
        b[14..18].copy_from_slice(&self.payload_len.to_le_bytes());
        b[18..34].copy_from_slice(&self.payload_digest);
        b
    }
}

/// Keyed tag function. The simulator's default is [`KeyedSha256`].
pub trait Authenticator: fmt::Debug + Send + Sync {
    fn tag(&self, key: &FlowKey, message: &[u8]) -> AuthTag;
}

/// Prefix-keyed SHA-256 truncated to 128 bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyedSha256;

impl Authenticator for KeyedSha256 {
    fn tag(&self, key: &FlowKey, message: &[u8]) -> AuthTag {
        let mut h = Sha256::new();
        h.update((key.0.len() as u32).to_le_bytes());
        h.update(&key.0);
        h.update(message);
        let d = h.finalize();
        let mut t = [0u8; 16];
        t.copy_from_slice(&d[..16]);
        AuthTag(t)
    }
}

pub fn sign_with(auth: &dyn Authenticator, d: &Datagram, key: &FlowKey) -> AuthTag {
    auth.tag(key, &d.signed_bytes())
}

pub fn sign(d: &Datagram, key: &FlowKey) -> AuthTag {
    sign_with(&KeyedSha256, d, key)
}

pub fn verify(tag: AuthTag, d: &Datagram, key: &FlowKey) -> bool {
    sign(d, key) == tag
}

/// Tunables of the proxy client and server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbpsParams {
    pub retry_interval: SimDuration,
    pub keepalive_interval: SimDuration,
    pub failure_threshold: u32,
    pub seq_window: u64,
    /// Proxy server to correspondent, one way.
    pub proxy_to_correspondent: SimDuration,
}

impl Default for AbpsParams {
    fn default() -> Self {
        AbpsParams {
            retry_interval: SimDuration::from_millis(20),
            keepalive_interval: SimDuration::from_millis(100),
            failure_threshold: 3,
            seq_window: 1024,
            proxy_to_correspondent: SimDuration::from_millis(5),
        }
    }
}

const EWMA_GAIN: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NicQos {
    pub up: bool,
    pub last_ack_at: Option<SimTime>,
    pub consecutive_failures: u32,
    /// Seconds.
    pub ewma_rtt: Option<f64>,
}

/// Per-NIC statistics fed by link-layer ACK outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct QosMonitor {
    nics: Vec<NicQos>,
    failure_threshold: u32,
}

impl QosMonitor {
    pub fn new(nic_count: usize, failure_threshold: u32) -> Self {
        QosMonitor {
            nics: vec![NicQos::default(); nic_count],
            failure_threshold,
        }
    }

    pub fn nic(&self, nic: usize) -> &NicQos {
        &self.nics[nic]
    }

    pub fn nic_count(&self) -> usize {
        self.nics.len()
    }

    pub fn failure_threshold(&self) -> u32 {
        self.failure_threshold
    }

    /// Link came up (fresh statistics) or went down.
    pub fn set_up(&mut self, nic: usize, up: bool) {
        self.nics[nic] = NicQos {
            up,
            ..NicQos::default()
        };
    }

    pub fn on_ack(&mut self, nic: usize, now: SimTime, rtt: SimDuration) {
        let q = &mut self.nics[nic];
        q.last_ack_at = Some(now);
        q.consecutive_failures = 0;
        let sample = rtt.as_secs_f64();
        q.ewma_rtt = Some(match q.ewma_rtt {
            Some(prev) => prev + EWMA_GAIN * (sample - prev),
            None => sample,
        });
    }

    pub fn on_failure(&mut self, nic: usize) {
        let q = &mut self.nics[nic];
        q.consecutive_failures = q.consecutive_failures.saturating_add(1);
    }

    pub fn usable(&self, nic: usize) -> bool {
        let q = &self.nics[nic];
        q.up && q.consecutive_failures < self.failure_threshold
    }

    pub fn any_usable(&self) -> bool {
        (0..self.nics.len()).any(|i| self.usable(i))
    }

    /// Test hook: overwrite a NIC's statistics.
    pub fn set_stats(&mut self, nic: usize, qos: NicQos) {
        self.nics[nic] = qos;
    }
}

/// Picks the interface for the next datagram.
///
/// Among usable NICs: fewest consecutive failures, then most recent ACK, then
/// lowest smoothed RTT, then lowest id. `None` when nothing is usable.
pub fn select_nic(monitor: &QosMonitor) -> Option<usize> {
    select_nic_sticky(monitor, None)
}

/// Like [`select_nic`], but keeps `current` while it is usable and has no
/// outstanding failures, so probe ACKs on a standby NIC do not pull traffic
/// back and forth.
pub fn select_nic_sticky(monitor: &QosMonitor, current: Option<usize>) -> Option<usize> {
    if let Some(c) = current {
        if monitor.usable(c) && monitor.nic(c).consecutive_failures == 0 {
            return Some(c);
        }
    }
    (0..monitor.nic_count())
        .filter(|&i| monitor.usable(i))
        .min_by(|&a, &b| {
            let (qa, qb) = (monitor.nic(a), monitor.nic(b));
            qa.consecutive_failures
                .cmp(&qb.consecutive_failures)
                .then_with(|| qb.last_ack_at.cmp(&qa.last_ack_at))
                .then_with(|| {
                    let ra = qa.ewma_rtt.unwrap_or(f64::INFINITY);
                    let rb = qb.ewma_rtt.unwrap_or(f64::INFINITY);
                    ra.total_cmp(&rb)
                })
                .then_with(|| a.cmp(&b))
        })
}

/// Sliding record of delivered sequence numbers for one direction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecentSeqWindow {
    highest: Option<u64>,
    seen: BTreeSet<u64>,
}

impl RecentSeqWindow {
    /// Records `seq` and returns true if it is new. Sequence numbers that have
    /// fallen behind the window are treated as already delivered.
    pub fn accept(&mut self, seq: u64, window: u64) -> bool {
        if let Some(h) = self.highest {
            if seq + window <= h || self.seen.contains(&seq) {
                return false;
            }
        }
        self.seen.insert(seq);
        let h = self.highest.map_or(seq, |h| h.max(seq));
        self.highest = Some(h);
        let floor = h.saturating_sub(window - 1);
        while let Some(&first) = self.seen.first() {
            if first >= floor {
                break;
            }
            self.seen.pop_first();
        }
        true
    }

    pub fn highest(&self) -> Option<u64> {
        self.highest
    }
}

#[derive(Debug, Clone)]
pub struct FlowEntry {
    pub key: FlowKey,
    pub correspondent: String,
    windows: [RecentSeqWindow; 2],
}

impl FlowEntry {
    pub fn highest_delivered(&self, dir: Direction) -> Option<u64> {
        self.windows[dir.index()].highest()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    UnknownFlow,
    BadTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerVerdict {
    Relay(FlowId),
    /// Probe authenticated and absorbed.
    Probe(FlowId),
    DropDuplicate(FlowId),
    DropAuth(Rejection),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServerStats {
    pub relayed: u64,
    pub probes: u64,
    pub dup_drops: u64,
    pub auth_drops: u64,
}

/// Fixed-host half of the proxy pair.
#[derive(Debug)]
pub struct ProxyServer {
    flows: HashMap<FlowId, FlowEntry>,
    seq_window: u64,
    auth: Box<dyn Authenticator>,
    stats: ServerStats,
}

impl ProxyServer {
    pub fn new(seq_window: u64) -> Self {
        Self::with_authenticator(seq_window, Box::new(KeyedSha256))
    }

    pub fn with_authenticator(seq_window: u64, auth: Box<dyn Authenticator>) -> Self {
        assert!(seq_window > 0);
        ProxyServer {
            flows: HashMap::new(),
            seq_window,
            auth,
            stats: ServerStats::default(),
        }
    }

    pub fn add_flow(&mut self, flow: FlowId, key: FlowKey, correspondent: impl Into<String>) {
        self.flows.insert(
            flow,
            FlowEntry {
                key,
                correspondent: correspondent.into(),
                windows: Default::default(),
            },
        );
    }

    pub fn flow(&self, flow: FlowId) -> Option<&FlowEntry> {
        self.flows.get(&flow)
    }

    pub fn stats(&self) -> ServerStats {
        self.stats
    }

    /// Authenticates the datagram against the claimed flow's key.
    pub fn identify_sender(&self, d: &Datagram) -> Result<FlowId, Rejection> {
        let entry = self.flows.get(&d.flow_id).ok_or(Rejection::UnknownFlow)?;
        if sign_with(self.auth.as_ref(), d, &entry.key) == d.auth_tag {
            Ok(d.flow_id)
        } else {
            Err(Rejection::BadTag)
        }
    }

    pub fn receive(&mut self, d: &Datagram) -> ServerVerdict {
        let flow = match self.identify_sender(d) {
            Ok(f) => f,
            Err(r) => {
                self.stats.auth_drops += 1;
                return ServerVerdict::DropAuth(r);
            }
        };
        if d.is_probe() {
            self.stats.probes += 1;
            return ServerVerdict::Probe(flow);
        }
        let window = self.seq_window;
        let entry = self.flows.get_mut(&flow).expect("identified flow exists");
        if entry.windows[d.direction.index()].accept(d.seq, window) {
            self.stats.relayed += 1;
            ServerVerdict::Relay(flow)
        } else {
            self.stats.dup_drops += 1;
            ServerVerdict::DropDuplicate(flow)
        }
    }
}
