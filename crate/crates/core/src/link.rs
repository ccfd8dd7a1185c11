//! Data-link layer: NIC association state machine and the per-frame
//! ACK/timeout rule that feeds the cross-layer monitor.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};
use crate::SimError;

/// Link-layer timing. All values are seconds in the scenario file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub frame_tx_latency: SimDuration,
    pub ack_timeout: SimDuration,
    pub association_delay: SimDuration,
    /// DHCP / router solicitation time after association.
    pub address_config_delay: SimDuration,
    pub wired_rtt_to_proxy: SimDuration,
    /// Period of association re-attempts while scanning.
    pub scan_interval: SimDuration,
    /// Continuous time out of coverage before an associated NIC declares the
    /// link lost (missed beacons).
    pub link_loss_timeout: SimDuration,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            frame_tx_latency: SimDuration::from_millis(2),
            ack_timeout: SimDuration::from_millis(30),
            association_delay: SimDuration::from_millis(500),
            address_config_delay: SimDuration::from_millis(1_000),
            wired_rtt_to_proxy: SimDuration::from_millis(20),
            scan_interval: SimDuration::from_millis(500),
            link_loss_timeout: SimDuration::from_millis(2_000),
        }
    }
}

impl LinkParams {
    pub fn check(&self) -> Result<(), String> {
        if self.ack_timeout <= self.frame_tx_latency + self.frame_tx_latency {
            return Err("ack_timeout must exceed twice frame_tx_latency".into());
        }
        if self.scan_interval == SimDuration::ZERO {
            return Err("scan_interval must be positive".into());
        }
        Ok(())
    }

    /// Time for a Scanning NIC to become Up once association starts.
    pub fn attach_time(&self) -> SimDuration {
        self.association_delay + self.address_config_delay
    }
}

/// A NIC's network-layer address in the WLAN it is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Locator(pub u32);

impl Locator {
    pub fn new(ap_index: usize, serial: u32) -> Self {
        Locator(((ap_index as u32 & 0xff) << 16) | (serial & 0xffff))
    }
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        write!(f, "10.{}.{}.{}", (v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Down,
    Scanning,
    Associating { ap: usize },
    Configuring { ap: usize },
    Up { ap: usize, address: Locator },
}

impl LinkState {
    pub fn name(&self) -> &'static str {
        match self {
            LinkState::Down => "down",
            LinkState::Scanning => "scanning",
            LinkState::Associating { .. } => "associating",
            LinkState::Configuring { .. } => "configuring",
            LinkState::Up { .. } => "up",
        }
    }
}

/// One wireless interface of the mobile node.
#[derive(Debug, Clone, PartialEq)]
pub struct NicState {
    pub nic_id: usize,
    state: LinkState,
}

impl NicState {
    pub fn new(nic_id: usize) -> Self {
        NicState {
            nic_id,
            state: LinkState::Down,
        }
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    pub fn is_up(&self) -> bool {
        matches!(self.state, LinkState::Up { .. })
    }

    pub fn is_scanning(&self) -> bool {
        self.state == LinkState::Scanning
    }

    /// AP this NIC is attached to (Configuring or Up).
    pub fn associated_ap(&self) -> Option<usize> {
        match self.state {
            LinkState::Configuring { ap } | LinkState::Up { ap, .. } => Some(ap),
            _ => None,
        }
    }

    /// AP this NIC holds or is trying to join.
    pub fn claimed_ap(&self) -> Option<usize> {
        match self.state {
            LinkState::Associating { ap } | LinkState::Configuring { ap } | LinkState::Up { ap, .. } => Some(ap),
            _ => None,
        }
    }

    pub fn local_address(&self) -> Option<Locator> {
        match self.state {
            LinkState::Up { address, .. } => Some(address),
            _ => None,
        }
    }

    pub fn power_on(&mut self) {
        if self.state == LinkState::Down {
            self.state = LinkState::Scanning;
        }
    }

    pub fn begin_association(&mut self, ap: usize) -> Result<(), SimError> {
        match self.state {
            LinkState::Down | LinkState::Scanning => {
                self.state = LinkState::Associating { ap };
                Ok(())
            }
            other => Err(SimError::BadAssociation {
                nic: self.nic_id,
                state: other.name(),
            }),
        }
    }

    pub fn association_complete(&mut self) -> Result<usize, SimError> {
        match self.state {
            LinkState::Associating { ap } => {
                self.state = LinkState::Configuring { ap };
                Ok(ap)
            }
            other => Err(SimError::BadAssociation {
                nic: self.nic_id,
                state: other.name(),
            }),
        }
    }

    pub fn configuration_complete(&mut self, address: Locator) -> Result<usize, SimError> {
        match self.state {
            LinkState::Configuring { ap } => {
                self.state = LinkState::Up { ap, address };
                Ok(ap)
            }
            other => Err(SimError::BadAssociation {
                nic: self.nic_id,
                state: other.name(),
            }),
        }
    }

    /// Drops the attachment (or an association in progress) and resumes
    /// scanning. Returns false when there was nothing to drop.
    pub fn link_down(&mut self) -> bool {
        match self.state {
            LinkState::Down | LinkState::Scanning => false,
            _ => {
                self.state = LinkState::Scanning;
                true
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameOutcome {
    AckReceived { at: SimTime },
    AckTimeout { at: SimTime },
}

/// What happens to one frame sent at `tx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameFate {
    /// Instant the AP received the frame, if it did.
    pub reached_ap: Option<SimTime>,
    pub outcome: FrameOutcome,
}

/// The frame reaches the AP iff the node is covered at `tx + latency`; the ACK
/// comes back iff it is also covered at `tx + 2 * latency`. Otherwise the
/// sender times out at `tx + ack_timeout`.
pub fn frame_fate(tx: SimTime, params: &LinkParams, covered_at: impl Fn(SimTime) -> bool) -> FrameFate {
    let arrival = tx + params.frame_tx_latency;
    let ack = arrival + params.frame_tx_latency;
    let timeout = FrameOutcome::AckTimeout {
        at: tx + params.ack_timeout,
    };
    if !covered_at(arrival) {
        return FrameFate {
            reached_ap: None,
            outcome: timeout,
        };
    }
    let outcome = if covered_at(ack) {
        FrameOutcome::AckReceived { at: ack }
    } else {
        timeout
    };
    FrameFate {
        reached_ap: Some(arrival),
        outcome,
    }
}
