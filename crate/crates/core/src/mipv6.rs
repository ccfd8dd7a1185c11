//! Simplified Mobile IPv6: after every re-association the node waits for a
//! router advertisement, runs duplicate address detection, registers its new
//! care-of address with the home agent, then runs return routability and a
//! binding update with the correspondent. Traffic is held until the whole
//! sequence completes.

use crate::link::Locator;
use crate::time::SimDuration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mipv6Params {
    pub router_adv_interval: SimDuration,
    pub dad_delay: SimDuration,
    pub binding_update_rtt: SimDuration,
    pub return_routability_rtt: SimDuration,
    pub home_agent_detour_latency: SimDuration,
    /// When false the procedure ends after the home registration and traffic
    /// is triangle-routed through the home agent.
    pub route_optimization: bool,
}

impl Default for Mipv6Params {
    fn default() -> Self {
        Mipv6Params {
            router_adv_interval: SimDuration::from_millis(3_000),
            dad_delay: SimDuration::from_millis(1_000),
            binding_update_rtt: SimDuration::from_millis(500),
            return_routability_rtt: SimDuration::from_millis(1_500),
            home_agent_detour_latency: SimDuration::from_millis(30),
            route_optimization: true,
        }
    }
}

impl Mipv6Params {
    /// Mean control time after the link is up (router advertisement wait
    /// taken at its mean, half the interval).
    pub fn expected_control_time(&self) -> SimDuration {
        let mut t = self.router_adv_interval.halved() + self.dad_delay + self.binding_update_rtt;
        if self.route_optimization {
            t = t + self.return_routability_rtt + self.binding_update_rtt;
        }
        t
    }

    /// Deterministic part of the control sequence.
    pub fn min_control_time(&self) -> SimDuration {
        self.dad_delay + self.binding_update_rtt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BindingState {
    pub care_of_address: Option<Locator>,
    pub home_binding_valid: bool,
    pub correspondent_binding_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mipv6Step {
    RouterAdvertisement,
    DuplicateAddressDetection,
    HomeBindingUpdate,
    ReturnRoutability,
    CorrespondentBindingUpdate,
}

impl Mipv6Step {
    pub fn kind(self) -> &'static str {
        match self {
            Mipv6Step::RouterAdvertisement => "mipv6-ra",
            Mipv6Step::DuplicateAddressDetection => "mipv6-dad",
            Mipv6Step::HomeBindingUpdate => "mipv6-bu-ha",
            Mipv6Step::ReturnRoutability => "mipv6-rr",
            Mipv6Step::CorrespondentBindingUpdate => "mipv6-bu-cn",
        }
    }

    /// Entity the step's control exchange is addressed to.
    pub fn peer(self) -> &'static str {
        match self {
            Mipv6Step::RouterAdvertisement | Mipv6Step::DuplicateAddressDetection => "ar",
            Mipv6Step::HomeBindingUpdate => "ha",
            Mipv6Step::ReturnRoutability | Mipv6Step::CorrespondentBindingUpdate => "cn",
        }
    }
}

/// How a data datagram may currently travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendPath {
    Hold,
    /// Extra one-way latency on top of the AP's wired latency.
    Via(SimDuration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mipv6Client {
    params: Mipv6Params,
    binding: BindingState,
    running: Option<Mipv6Step>,
}

impl Mipv6Client {
    pub fn new(params: Mipv6Params) -> Self {
        Mipv6Client {
            params,
            binding: BindingState::default(),
            running: None,
        }
    }

    pub fn params(&self) -> &Mipv6Params {
        &self.params
    }

    pub fn binding(&self) -> BindingState {
        self.binding
    }

    pub fn running(&self) -> Option<Mipv6Step> {
        self.running
    }

    /// Starts (or restarts) the handover on a fresh care-of address.
    /// `ra_wait` is the drawn router-advertisement wait.
    pub fn start(&mut self, care_of: Locator, ra_wait: SimDuration) -> (Mipv6Step, SimDuration) {
        self.binding = BindingState {
            care_of_address: Some(care_of),
            ..BindingState::default()
        };
        self.running = Some(Mipv6Step::RouterAdvertisement);
        (Mipv6Step::RouterAdvertisement, ra_wait)
    }

    /// Finishes `step`; returns the next step and its delay, or `None` once
    /// the sequence is complete.
    pub fn complete(&mut self, step: Mipv6Step) -> Option<(Mipv6Step, SimDuration)> {
        debug_assert_eq!(self.running, Some(step));
        let p = &self.params;
        let next = match step {
            Mipv6Step::RouterAdvertisement => Some((Mipv6Step::DuplicateAddressDetection, p.dad_delay)),
            Mipv6Step::DuplicateAddressDetection => Some((Mipv6Step::HomeBindingUpdate, p.binding_update_rtt)),
            Mipv6Step::HomeBindingUpdate => {
                self.binding.home_binding_valid = true;
                p.route_optimization
                    .then_some((Mipv6Step::ReturnRoutability, p.return_routability_rtt))
            }
            Mipv6Step::ReturnRoutability => Some((Mipv6Step::CorrespondentBindingUpdate, p.binding_update_rtt)),
            Mipv6Step::CorrespondentBindingUpdate => {
                self.binding.correspondent_binding_valid = true;
                None
            }
        };
        self.running = next.map(|(s, _)| s);
        next
    }

    /// Coverage lost mid-procedure: abandon it, keeping the care-of address
    /// so it can be restarted from the router-advertisement wait.
    pub fn abort(&mut self) {
        self.running = None;
        self.binding.home_binding_valid = false;
        self.binding.correspondent_binding_valid = false;
    }

    pub fn on_link_down(&mut self) {
        self.running = None;
        self.binding = BindingState::default();
    }

    pub fn send_path(&self) -> SendPath {
        if self.running.is_some() {
            SendPath::Hold
        } else if self.binding.correspondent_binding_valid {
            SendPath::Via(SimDuration::ZERO)
        } else if self.binding.home_binding_valid {
            SendPath::Via(self.params.home_agent_detour_latency)
        } else {
            SendPath::Hold
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_to_end(c: &mut Mipv6Client, ra: SimDuration) -> SimDuration {
        let (mut step, mut total) = c.start(Locator(1), ra);
        loop {
            match c.complete(step) {
                Some((next, d)) => {
                    total = total + d;
                    step = next;
                }
                None => return total,
            }
        }
    }

    #[test]
    fn default_expected_control_time_is_five_seconds() {
        assert_eq!(
            Mipv6Params::default().expected_control_time(),
            SimDuration::from_millis(5_000)
        );
        let mut c = Mipv6Client::new(Mipv6Params::default());
        // RA wait at its mean reproduces the expected total.
        assert_eq!(
            run_to_end(&mut c, SimDuration::from_millis(1_500)),
            SimDuration::from_millis(5_000)
        );
        assert!(c.binding().correspondent_binding_valid);
        assert_eq!(c.send_path(), SendPath::Via(SimDuration::ZERO));
    }

    #[test]
    fn zero_timers_give_zero_control_time() {
        let p = Mipv6Params {
            router_adv_interval: SimDuration::ZERO,
            dad_delay: SimDuration::ZERO,
            binding_update_rtt: SimDuration::ZERO,
            return_routability_rtt: SimDuration::ZERO,
            ..Mipv6Params::default()
        };
        assert_eq!(p.expected_control_time(), SimDuration::ZERO);
        let mut c = Mipv6Client::new(p);
        assert_eq!(run_to_end(&mut c, SimDuration::ZERO), SimDuration::ZERO);
    }

    #[test]
    fn send_path_rules() {
        let mut c = Mipv6Client::new(Mipv6Params {
            route_optimization: false,
            ..Mipv6Params::default()
        });
        assert_eq!(c.send_path(), SendPath::Hold);
        let (s, _) = c.start(Locator(2), SimDuration::ZERO);
        assert_eq!(c.send_path(), SendPath::Hold);
        let (s, _) = c.complete(s).unwrap();
        let (s, _) = c.complete(s).unwrap();
        assert!(c.complete(s).is_none());
        assert_eq!(c.send_path(), SendPath::Via(SimDuration::from_millis(30)));
        c.on_link_down();
        assert_eq!(c.send_path(), SendPath::Hold);
        assert_eq!(c.binding().care_of_address, None);
    }

    #[test]
    fn binding_invariant_holds_through_sequence() {
        let mut c = Mipv6Client::new(Mipv6Params::default());
        let (mut step, _) = c.start(Locator(3), SimDuration::ZERO);
        loop {
            let b = c.binding();
            assert!(!b.correspondent_binding_valid || b.home_binding_valid);
            match c.complete(step) {
                Some((n, _)) => step = n,
                None => break,
            }
        }
        c.abort();
        assert_eq!(c.running(), None);
        assert_eq!(c.binding().care_of_address, Some(Locator(3)));
        assert!(!c.binding().home_binding_valid);
    }
}
