//! Simplified LISP mobility: after every locator change the node's tunnel
//! router queries the mapping system and waits for the map-cache update;
//! when the correspondent sits outside a LISP site an extra configuration
//! step is needed. Data is encapsulated once the cache entry is valid.

use crate::link::Locator;
use crate::mipv6::SendPath;
use crate::time::SimDuration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LispParams {
    pub map_request_rtt: SimDuration,
    pub map_cache_update_delay: SimDuration,
    pub encap_latency: SimDuration,
    pub non_lisp_config_delay: SimDuration,
    pub correspondent_lisp_enabled: bool,
}

impl Default for LispParams {
    fn default() -> Self {
        LispParams {
            map_request_rtt: SimDuration::from_millis(500),
            map_cache_update_delay: SimDuration::from_millis(500),
            encap_latency: SimDuration::from_millis(5),
            non_lisp_config_delay: SimDuration::from_millis(1_000),
            correspondent_lisp_enabled: false,
        }
    }
}

impl LispParams {
    pub fn control_time(&self) -> SimDuration {
        let t = self.map_request_rtt + self.map_cache_update_delay;
        if self.correspondent_lisp_enabled {
            t
        } else {
            t + self.non_lisp_config_delay
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MapCacheEntry {
    pub endpoint_id: u32,
    pub locator: Option<Locator>,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LispStep {
    MapRequest,
    CacheUpdate,
    NonLispConfig,
}

impl LispStep {
    pub fn kind(self) -> &'static str {
        match self {
            LispStep::MapRequest => "lisp-map-request",
            LispStep::CacheUpdate => "lisp-cache-update",
            LispStep::NonLispConfig => "lisp-non-lisp-config",
        }
    }

    pub fn peer(self) -> &'static str {
        match self {
            LispStep::MapRequest => "map-system",
            LispStep::CacheUpdate => "etr",
            LispStep::NonLispConfig => "itr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LispClient {
    params: LispParams,
    cache: MapCacheEntry,
    running: Option<LispStep>,
}

impl LispClient {
    pub fn new(params: LispParams, endpoint_id: u32) -> Self {
        LispClient {
            params,
            cache: MapCacheEntry {
                endpoint_id,
                ..MapCacheEntry::default()
            },
            running: None,
        }
    }

    pub fn params(&self) -> &LispParams {
        &self.params
    }

    pub fn cache(&self) -> MapCacheEntry {
        self.cache
    }

    pub fn running(&self) -> Option<LispStep> {
        self.running
    }

    pub fn start(&mut self, locator: Locator) -> (LispStep, SimDuration) {
        self.cache.locator = Some(locator);
        self.cache.valid = false;
        self.running = Some(LispStep::MapRequest);
        (LispStep::MapRequest, self.params.map_request_rtt)
    }

    pub fn complete(&mut self, step: LispStep) -> Option<(LispStep, SimDuration)> {
        debug_assert_eq!(self.running, Some(step));
        let p = &self.params;
        let next = match step {
            LispStep::MapRequest => Some((LispStep::CacheUpdate, p.map_cache_update_delay)),
            LispStep::CacheUpdate if !p.correspondent_lisp_enabled => {
                Some((LispStep::NonLispConfig, p.non_lisp_config_delay))
            }
            LispStep::CacheUpdate | LispStep::NonLispConfig => None,
        };
        if next.is_none() {
            self.cache.valid = true;
        }
        self.running = next.map(|(s, _)| s);
        next
    }

    pub fn abort(&mut self) {
        self.running = None;
        self.cache.valid = false;
    }

    pub fn on_link_down(&mut self) {
        self.abort();
        self.cache.locator = None;
    }

    pub fn send_path(&self) -> SendPath {
        if self.cache.valid && self.running.is_none() {
            SendPath::Via(self.params.encap_latency)
        } else {
            SendPath::Hold
        }
    }
}
