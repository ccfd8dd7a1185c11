//! Deterministic discrete-event simulation of multihomed mobile nodes.
//!
//! The crate models a mobile node with one or two WiFi interfaces walking
//! through a field of access points and obstacles, and measures how long each
//! handover interrupts an uplink datagram flow under three mobility schemes:
//!
//! * **ABPS**: a proxy client on the node picks, per datagram, the best usable
//!   interface from link-layer ACK feedback; a fixed proxy server identifies
//!   the sender by a keyed tag and relays to the correspondent.
//! * **MIPv6** (simplified): single interface, home agent, binding updates and
//!   return routability after every re-association.
//! * **LISP** (simplified): single interface, map-request and cache update
//!   after every locator change.
//!
//! It also contains a distance-prioritised ad-hoc broadcast with duplicate
//! suppression and a greedy geographic relay.
//!
//! Module map:
//!
//! | module       | role                                                      |
//! |--------------|-----------------------------------------------------------|
//! | [`engine`]   | event queue, clock, event log                             |
//! | [`world`]    | obstacles, access points, mobility, coverage              |
//! | [`link`]     | NIC state machine and frame ACK/timeout rule              |
//! | [`abps`]     | datagram tags, QoS monitor, NIC selection, proxy server   |
//! | [`mipv6`]    | MIPv6 handover procedure and send path                    |
//! | [`lisp`]     | LISP handover procedure and send path                     |
//! | [`handover`] | the mobile-node simulation tying the above together       |
//! | [`broadcast`]| ad-hoc broadcast and greedy relay                         |
//! | [`metrics`]  | downtime records, log oracle, aggregation                 |
//! | [`scenario`] | scenario file format                                      |
//! | [`experiment`]| run matrix and CSV/log outputs                           |
//! | [`oracle`]   | brute-force checkers used by the test suites              |

pub mod abps;
pub mod broadcast;
pub mod engine;
pub mod experiment;
pub mod handover;
pub mod link;
pub mod lisp;
pub mod metrics;
pub mod mipv6;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod time;
pub mod world;

use thiserror::Error;

pub use engine::{Engine, EntityId, EventHandle, EventLog, EventPayload, LogRecord};
pub use metrics::{DowntimeCause, DowntimeRecord, RunSummary};
pub use scenario::Scenario;
pub use time::{SimDuration, SimTime};
pub use world::{AccessPoint, Obstacle, Point2D, WaypointPath};

/// Mobility-management scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Abps,
    Mipv6,
    Lisp,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Abps, Protocol::Mipv6, Protocol::Lisp];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Abps => "abps",
            Protocol::Mipv6 => "mipv6",
            Protocol::Lisp => "lisp",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "abps" => Ok(Protocol::Abps),
            "mipv6" => Ok(Protocol::Mipv6),
            "lisp" => Ok(Protocol::Lisp),
            other => Err(format!("unknown protocol `{other}` (expected abps, mipv6 or lisp)")),
        }
    }
}

/// Errors that indicate a bug in protocol logic rather than bad input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event scheduled at {requested} but clock is already {now}")]
    CausalityViolation { now: SimTime, requested: SimTime },
    #[error("transmit on nic{nic} which is not up")]
    NicNotUp { nic: usize },
    #[error("association of nic{nic} requested in state {state}")]
    BadAssociation { nic: usize, state: &'static str },
    #[error("invariant violated: {0}")]
    Invariant(String),
}
