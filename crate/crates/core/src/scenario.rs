//! Scenario file format.
//!
//! Scenarios are TOML documents with named sections (`[run]`, `[traffic]`,
//! `[link]`, `[abps]`, `[mipv6]`, `[lisp]`, `[adhoc]`) and arrays of tables for
//! `[[access_point]]`, `[[obstacle]]` and `[[path]]`. Every time value is in
//! seconds, every distance in meters. Unknown keys are rejected; every
//! diagnostic names the offending key and, where possible, its line.
//!
//! ```toml
//! name = "two-aps"
//!
//! [run]
//! duration = 60.0
//! seeds = [1, 2, 3]
//! protocols = ["abps", "mipv6", "lisp"]
//! path = "walk"
//!
//! [[access_point]]
//! id = "ap1"
//! x = 0.0
//! y = 0.0
//! range = 50.0
//! wlan = "wlan-1"
//!
//! [[path]]
//! id = "walk"
//! speed = 1.5
//! waypoints = [[0.0, 0.0], [90.0, 0.0]]
//! ```
//!
//! See `scenarios/README.md` in the repository for the full key reference.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::abps::{AbpsParams, FlowId};
use crate::broadcast::{AdhocConfig, Area};
use crate::link::LinkParams;
use crate::lisp::LispParams;
use crate::mipv6::Mipv6Params;
use crate::time::{SimDuration, SimTime};
use crate::world::{AccessPoint, CoverageMap, Obstacle, Point2D, WaypointPath};
use crate::Protocol;

/// The bundled field scenario: six APs in distinct WLANs along a closed loop,
/// five handovers and one coverage gap.
pub const BUNDLED_SCENARIO: &str = include_str!("../../../scenarios/smart_shire.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct RunControl {
    pub duration: SimTime,
    pub seeds: Vec<u64>,
    pub protocols: Vec<Protocol>,
    /// Index into [`Scenario::paths`] followed by the mobile node.
    pub path: usize,
    pub coverage_dt: SimDuration,
    pub coverage_resolution: SimDuration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub interval: SimDuration,
    pub payload_len: u32,
    pub start: SimTime,
    pub flow_id: FlowId,
    /// Secret from which both proxies derive the flow key.
    pub key_secret: String,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            interval: SimDuration::from_millis(10),
            payload_len: 160,
            start: SimTime::from_millis(20_000),
            flow_id: FlowId(1),
            key_secret: "shire".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPath {
    pub id: String,
    pub path: WaypointPath,
    /// Uniform speed as written, when no per-segment speeds were given.
    speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedObstacle {
    pub id: String,
    pub obstacle: Obstacle,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub run: RunControl,
    pub traffic: TrafficParams,
    pub link: LinkParams,
    pub abps: AbpsParams,
    pub mipv6: Mipv6Params,
    pub lisp: LispParams,
    pub access_points: Vec<AccessPoint>,
    pub obstacles: Vec<NamedObstacle>,
    pub paths: Vec<NamedPath>,
    pub adhoc: Option<AdhocConfig>,
}

impl Scenario {
    pub fn bundled() -> Scenario {
        parse_scenario(BUNDLED_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn mobile_path(&self) -> &WaypointPath {
        &self.paths[self.run.path].path
    }

    pub fn obstacle_shapes(&self) -> Vec<Obstacle> {
        self.obstacles.iter().map(|o| o.obstacle.clone()).collect()
    }

    pub fn coverage_map(&self) -> CoverageMap {
        CoverageMap::build(
            self.mobile_path(),
            &self.access_points,
            &self.obstacle_shapes(),
            self.run.coverage_dt,
            self.run.coverage_resolution,
            self.run.duration,
        )
    }
}

/// One problem found while loading a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line, when the key could be located.
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn mentions(&self, key: &str) -> bool {
        self.0
            .iter()
            .any(|d| d.key.split(['.', '[']).any(|seg| seg == key) || d.key == key)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

// ---- file representation -------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default = "default_name")]
    name: String,
    run: RunFile,
    #[serde(default)]
    traffic: TrafficFile,
    #[serde(default)]
    link: LinkFile,
    #[serde(default)]
    abps: AbpsFile,
    #[serde(default)]
    mipv6: Mipv6File,
    #[serde(default)]
    lisp: LispFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adhoc: Option<AdhocFile>,
    #[serde(default)]
    access_point: Vec<ApFile>,
    #[serde(default)]
    obstacle: Vec<ObstacleFile>,
    #[serde(default)]
    path: Vec<PathFile>,
}

fn default_name() -> String {
    "unnamed".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    duration: f64,
    seeds: Vec<u64>,
    #[serde(default = "default_protocols")]
    protocols: Vec<String>,
    path: String,
    #[serde(default = "default_dt")]
    coverage_dt: f64,
    #[serde(default = "default_resolution")]
    coverage_resolution: f64,
}

fn default_protocols() -> Vec<String> {
    Protocol::ALL.iter().map(|p| p.name().to_string()).collect()
}
fn default_dt() -> f64 {
    0.1
}
fn default_resolution() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrafficFile {
    interval: f64,
    payload_len: u32,
    start: f64,
    flow_id: u32,
    key_secret: String,
}

impl Default for TrafficFile {
    fn default() -> Self {
        let t = TrafficParams::default();
        TrafficFile {
            interval: t.interval.as_secs_f64(),
            payload_len: t.payload_len,
            start: t.start.as_secs_f64(),
            flow_id: t.flow_id.0,
            key_secret: t.key_secret,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LinkFile {
    frame_tx_latency: f64,
    ack_timeout: f64,
    association_delay: f64,
    address_config_delay: f64,
    wired_rtt_to_proxy: f64,
    scan_interval: f64,
    link_loss_timeout: f64,
}

impl Default for LinkFile {
    fn default() -> Self {
        let l = LinkParams::default();
        LinkFile {
            frame_tx_latency: l.frame_tx_latency.as_secs_f64(),
            ack_timeout: l.ack_timeout.as_secs_f64(),
            association_delay: l.association_delay.as_secs_f64(),
            address_config_delay: l.address_config_delay.as_secs_f64(),
            wired_rtt_to_proxy: l.wired_rtt_to_proxy.as_secs_f64(),
            scan_interval: l.scan_interval.as_secs_f64(),
            link_loss_timeout: l.link_loss_timeout.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AbpsFile {
    retry_interval: f64,
    keepalive_interval: f64,
    failure_threshold: u32,
    seq_window: u64,
    proxy_to_correspondent: f64,
}

impl Default for AbpsFile {
    fn default() -> Self {
        let a = AbpsParams::default();
        AbpsFile {
            retry_interval: a.retry_interval.as_secs_f64(),
            keepalive_interval: a.keepalive_interval.as_secs_f64(),
            failure_threshold: a.failure_threshold,
            seq_window: a.seq_window,
            proxy_to_correspondent: a.proxy_to_correspondent.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Mipv6File {
    router_adv_interval: f64,
    dad_delay: f64,
    binding_update_rtt: f64,
    return_routability_rtt: f64,
    home_agent_detour_latency: f64,
    route_optimization: bool,
}

impl Default for Mipv6File {
    fn default() -> Self {
        let m = Mipv6Params::default();
        Mipv6File {
            router_adv_interval: m.router_adv_interval.as_secs_f64(),
            dad_delay: m.dad_delay.as_secs_f64(),
            binding_update_rtt: m.binding_update_rtt.as_secs_f64(),
            return_routability_rtt: m.return_routability_rtt.as_secs_f64(),
            home_agent_detour_latency: m.home_agent_detour_latency.as_secs_f64(),
            route_optimization: m.route_optimization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LispFile {
    map_request_rtt: f64,
    map_cache_update_delay: f64,
    encap_latency: f64,
    non_lisp_config_delay: f64,
    correspondent_lisp_enabled: bool,
}

impl Default for LispFile {
    fn default() -> Self {
        let l = LispParams::default();
        LispFile {
            map_request_rtt: l.map_request_rtt.as_secs_f64(),
            map_cache_update_delay: l.map_cache_update_delay.as_secs_f64(),
            encap_latency: l.encap_latency.as_secs_f64(),
            non_lisp_config_delay: l.non_lisp_config_delay.as_secs_f64(),
            correspondent_lisp_enabled: l.correspondent_lisp_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApFile {
    id: String,
    x: f64,
    y: f64,
    range: f64,
    wlan: String,
    #[serde(default = "default_wired")]
    wired_latency: f64,
}

fn default_wired() -> f64 {
    0.015
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleFile {
    id: String,
    vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathFile {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segment_speeds: Option<Vec<f64>>,
    waypoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdhocFile {
    range: f64,
    #[serde(default = "default_t_max")]
    t_max: f64,
    #[serde(default = "default_ttl")]
    ttl: u32,
    #[serde(default = "default_hop_latency")]
    hop_latency: f64,
    origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gateway: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<AreaFile>,
    #[serde(default)]
    node: Vec<AdhocNodeFile>,
}

fn default_t_max() -> f64 {
    0.1
}
fn default_ttl() -> u32 {
    16
}
fn default_hop_latency() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum AreaFile {
    Circle { center: [f64; 2], radius: f64 },
    Rect { min: [f64; 2], max: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdhocNodeFile {
    id: String,
    x: f64,
    y: f64,
}

// ---- parse / validate ----------------------------------------------------

struct Checker<'a> {
    text: &'a str,
    diags: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn err(&mut self, key: impl Into<String>, message: impl Into<String>) {
        let key = key.into();
        let line = locate_key(self.text, &key);
        self.diags.push(Diagnostic {
            line,
            key,
            message: message.into(),
        });
    }

    fn nonneg(&mut self, key: &str, v: f64) -> SimDuration {
        if !v.is_finite() || v < 0.0 {
            self.err(key, format!("must be a finite value >= 0, got {v}"));
        }
        SimDuration::from_secs_f64(v)
    }

    fn positive(&mut self, key: &str, v: f64) -> SimDuration {
        if !v.is_finite() || v <= 0.0 {
            self.err(key, format!("must be a finite value > 0, got {v}"));
        }
        SimDuration::from_secs_f64(v)
    }

    fn finite(&mut self, key: &str, v: f64) -> f64 {
        if !v.is_finite() {
            self.err(key, "must be finite");
        }
        v
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, Diagnostics> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Diagnostics(vec![toml_diag(text, &e)]))?;
    build(text, file)
}

fn toml_diag(text: &str, e: &toml::de::Error) -> Diagnostic {
    let message = e.message().to_string();
    let key = message.split('`').nth(1).map(str::to_string).unwrap_or_default();
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    Diagnostic { line, key, message }
}

fn build(text: &str, f: ScenarioFile) -> Result<Scenario, Diagnostics> {
    let mut c = Checker {
        text,
        diags: Vec::new(),
    };

    // run
    let duration = c.positive("run.duration", f.run.duration);
    if f.run.seeds.is_empty() {
        c.err("run.seeds", "at least one seed is required");
    }
    let mut protocols = Vec::new();
    for p in &f.run.protocols {
        match p.parse::<Protocol>() {
            Ok(p) => protocols.push(p),
            Err(m) => c.err("run.protocols", m),
        }
    }
    let coverage_dt = c.positive("run.coverage_dt", f.run.coverage_dt);
    let coverage_resolution = c.positive("run.coverage_resolution", f.run.coverage_resolution);
    if coverage_resolution > coverage_dt {
        c.err("run.coverage_resolution", "must not exceed coverage_dt");
    }

    // traffic
    let traffic = TrafficParams {
        interval: c.positive("traffic.interval", f.traffic.interval),
        payload_len: f.traffic.payload_len,
        start: SimTime::ZERO + c.nonneg("traffic.start", f.traffic.start),
        flow_id: FlowId(f.traffic.flow_id),
        key_secret: f.traffic.key_secret.clone(),
    };
    if traffic.payload_len == 0 {
        c.err("traffic.payload_len", "must be > 0");
    }

    // link
    let l = &f.link;
    let link = LinkParams {
        frame_tx_latency: c.nonneg("link.frame_tx_latency", l.frame_tx_latency),
        ack_timeout: c.nonneg("link.ack_timeout", l.ack_timeout),
        association_delay: c.nonneg("link.association_delay", l.association_delay),
        address_config_delay: c.nonneg("link.address_config_delay", l.address_config_delay),
        wired_rtt_to_proxy: c.nonneg("link.wired_rtt_to_proxy", l.wired_rtt_to_proxy),
        scan_interval: c.positive("link.scan_interval", l.scan_interval),
        link_loss_timeout: c.nonneg("link.link_loss_timeout", l.link_loss_timeout),
    };
    if link.ack_timeout <= link.frame_tx_latency + link.frame_tx_latency {
        c.err("link.ack_timeout", "must exceed twice frame_tx_latency");
    }

    let a = &f.abps;
    let abps = AbpsParams {
        retry_interval: c.positive("abps.retry_interval", a.retry_interval),
        keepalive_interval: c.positive("abps.keepalive_interval", a.keepalive_interval),
        failure_threshold: a.failure_threshold,
        seq_window: a.seq_window,
        proxy_to_correspondent: c.nonneg("abps.proxy_to_correspondent", a.proxy_to_correspondent),
    };
    if abps.failure_threshold == 0 {
        c.err("abps.failure_threshold", "must be >= 1");
    }
    if abps.seq_window == 0 {
        c.err("abps.seq_window", "must be >= 1");
    }

    let m = &f.mipv6;
    let mipv6 = Mipv6Params {
        router_adv_interval: c.nonneg("mipv6.router_adv_interval", m.router_adv_interval),
        dad_delay: c.nonneg("mipv6.dad_delay", m.dad_delay),
        binding_update_rtt: c.nonneg("mipv6.binding_update_rtt", m.binding_update_rtt),
        return_routability_rtt: c.nonneg("mipv6.return_routability_rtt", m.return_routability_rtt),
        home_agent_detour_latency: c.nonneg("mipv6.home_agent_detour_latency", m.home_agent_detour_latency),
        route_optimization: m.route_optimization,
    };

    let ls = &f.lisp;
    let lisp = LispParams {
        map_request_rtt: c.nonneg("lisp.map_request_rtt", ls.map_request_rtt),
        map_cache_update_delay: c.nonneg("lisp.map_cache_update_delay", ls.map_cache_update_delay),
        encap_latency: c.nonneg("lisp.encap_latency", ls.encap_latency),
        non_lisp_config_delay: c.nonneg("lisp.non_lisp_config_delay", ls.non_lisp_config_delay),
        correspondent_lisp_enabled: ls.correspondent_lisp_enabled,
    };

    // access points
    if f.access_point.is_empty() {
        c.err(
            "access_point",
            "missing section: at least one [[access_point]] is required",
        );
    }
    let mut ids = HashSet::new();
    let mut wlans = HashSet::new();
    let mut access_points = Vec::new();
    for (i, ap) in f.access_point.iter().enumerate() {
        let k = |field: &str| format!("access_point[{i}].{field}");
        if !ids.insert(ap.id.clone()) {
            c.err(k("id"), format!("duplicate access point id `{}`", ap.id));
        }
        if !wlans.insert(ap.wlan.clone()) {
            c.err(
                k("wlan"),
                format!("WLAN `{}` already used by another access point", ap.wlan),
            );
        }
        let x = c.finite(&k("x"), ap.x);
        let y = c.finite(&k("y"), ap.y);
        if !(ap.range.is_finite() && ap.range > 0.0) {
            c.err(k("range"), format!("must be a finite value > 0, got {}", ap.range));
        }
        c.nonneg(&k("wired_latency"), ap.wired_latency);
        access_points.push(AccessPoint {
            id: ap.id.clone(),
            position: Point2D::new(x, y),
            range: ap.range,
            wlan_id: ap.wlan.clone(),
            wired_latency_to_internet: ap.wired_latency,
        });
    }

    // obstacles
    let mut obstacles = Vec::new();
    let mut obstacle_ids = HashSet::new();
    for (i, o) in f.obstacle.iter().enumerate() {
        if !obstacle_ids.insert(o.id.clone()) {
            c.err(format!("obstacle[{i}].id"), format!("duplicate obstacle id `{}`", o.id));
        }
        let verts = o.vertices.iter().map(|v| Point2D::new(v[0], v[1])).collect();
        match Obstacle::new(verts) {
            Ok(obstacle) => obstacles.push(NamedObstacle {
                id: o.id.clone(),
                obstacle,
            }),
            Err(e) => c.err(format!("obstacle[{i}].vertices"), e.to_string()),
        }
    }

    // paths
    if f.path.is_empty() {
        c.err("path", "missing section: at least one [[path]] is required");
    }
    let mut paths = Vec::new();
    let mut path_ids = HashSet::new();
    for (i, p) in f.path.iter().enumerate() {
        if !path_ids.insert(p.id.clone()) {
            c.err(format!("path[{i}].id"), format!("duplicate path id `{}`", p.id));
        }
        let wps: Vec<Point2D> = p.waypoints.iter().map(|v| Point2D::new(v[0], v[1])).collect();
        let built = match (&p.speed, &p.segment_speeds) {
            (Some(_), Some(_)) => {
                c.err(
                    format!("path[{i}].segment_speeds"),
                    "give either speed or segment_speeds",
                );
                continue;
            }
            (None, None) => {
                c.err(format!("path[{i}].speed"), "missing field `speed`");
                continue;
            }
            (Some(s), None) => {
                if !(s.is_finite() && *s > 0.0) {
                    c.err(
                        format!("path[{i}].speed"),
                        format!("must be a finite value > 0, got {s}"),
                    );
                    continue;
                }
                WaypointPath::new(wps, *s)
            }
            (None, Some(v)) => WaypointPath::with_segment_speeds(wps, v.clone()),
        };
        match built {
            Ok(path) => paths.push(NamedPath {
                id: p.id.clone(),
                path,
                speed: p.speed,
            }),
            Err(e) => c.err(format!("path[{i}].waypoints"), e.to_string()),
        }
    }
    let path_idx = paths.iter().position(|p| p.id == f.run.path);
    if path_idx.is_none() && !paths.is_empty() {
        c.err("run.path", format!("no [[path]] with id `{}`", f.run.path));
    }

    let adhoc = f.adhoc.as_ref().map(|a| build_adhoc(&mut c, a));

    if !c.diags.is_empty() {
        return Err(Diagnostics(c.diags));
    }
    Ok(Scenario {
        name: f.name,
        run: RunControl {
            duration: SimTime::ZERO + duration,
            seeds: f.run.seeds,
            protocols,
            path: path_idx.unwrap_or(0),
            coverage_dt,
            coverage_resolution,
        },
        traffic,
        link,
        abps,
        mipv6,
        lisp,
        access_points,
        obstacles,
        paths,
        adhoc: adhoc.flatten(),
    })
}

fn build_adhoc(c: &mut Checker<'_>, a: &AdhocFile) -> Option<AdhocConfig> {
    if !(a.range.is_finite() && a.range > 0.0) {
        c.err("adhoc.range", format!("must be a finite value > 0, got {}", a.range));
    }
    let t_max = c.positive("adhoc.t_max", a.t_max);
    let hop_latency = c.nonneg("adhoc.hop_latency", a.hop_latency);
    let mut ids = HashSet::new();
    let mut nodes = Vec::new();
    for (i, n) in a.node.iter().enumerate() {
        if !ids.insert(n.id.clone()) {
            c.err(format!("adhoc.node[{i}].id"), format!("duplicate node id `{}`", n.id));
        }
        let x = c.finite(&format!("adhoc.node[{i}].x"), n.x);
        let y = c.finite(&format!("adhoc.node[{i}].y"), n.y);
        nodes.push((n.id.clone(), Point2D::new(x, y)));
    }
    let origin = nodes.iter().position(|(id, _)| *id == a.origin);
    if origin.is_none() {
        c.err("adhoc.origin", format!("no adhoc node with id `{}`", a.origin));
    }
    let gateway = match &a.gateway {
        Some(g) => {
            let idx = nodes.iter().position(|(id, _)| id == g);
            if idx.is_none() {
                c.err("adhoc.gateway", format!("no adhoc node with id `{g}`"));
            }
            idx
        }
        None => None,
    };
    let area = a.area.as_ref().map(|ar| match ar {
        AreaFile::Circle { center, radius } => {
            if !(radius.is_finite() && *radius > 0.0) {
                c.err("adhoc.area", "circle radius must be > 0");
            }
            Area::Circle {
                center: Point2D::new(center[0], center[1]),
                radius: *radius,
            }
        }
        AreaFile::Rect { min, max } => {
            if !(min[0] < max[0] && min[1] < max[1]) {
                c.err("adhoc.area", "rect min must be below max on both axes");
            }
            Area::Rect {
                min: Point2D::new(min[0], min[1]),
                max: Point2D::new(max[0], max[1]),
            }
        }
    });
    Some(AdhocConfig {
        range: a.range,
        t_max,
        ttl: a.ttl,
        hop_latency,
        origin: origin?,
        gateway,
        area,
        nodes,
    })
}

/// Best-effort line lookup for keys like `access_point[2].range` or `run.duration`.
fn locate_key(text: &str, key: &str) -> Option<usize> {
    let mut segments: Vec<(&str, Option<usize>)> = key
        .split('.')
        .map(|seg| match seg.split_once('[') {
            Some((name, rest)) => (name, rest.trim_end_matches(']').parse().ok()),
            None => (seg, None),
        })
        .collect();
    let (leaf, leaf_idx) = segments.pop()?;
    let lines: Vec<&str> = text.lines().collect();

    // The table holding the leaf: `[a.b]` or the n-th `[[a.b]]`.
    let (start, end) = if segments.is_empty() {
        if let Some(n) = leaf_idx {
            let header = format!("[[{leaf}]]");
            return find_nth(&lines, &header, n, 0, lines.len()).map(|l| l + 1);
        }
        (
            0,
            lines
                .iter()
                .position(|l| l.trim_start().starts_with('['))
                .unwrap_or(lines.len()),
        )
    } else {
        let table: Vec<&str> = segments.iter().map(|s| s.0).collect();
        let name = table.join(".");
        let start = match segments.last().and_then(|s| s.1) {
            Some(n) => find_nth(&lines, &format!("[[{name}]]"), n, 0, lines.len())?,
            None => lines.iter().position(|l| l.trim() == format!("[{name}]"))?,
        };
        let end = lines[start + 1..]
            .iter()
            .position(|l| l.trim_start().starts_with('['))
            .map_or(lines.len(), |p| start + 1 + p);
        (start, end)
    };
    (start..end)
        .find(|&i| {
            let t = lines[i].trim_start();
            t.strip_prefix(leaf)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .or((!segments.is_empty()).then_some(start))
        .map(|l| l + 1)
}

fn find_nth(lines: &[&str], header: &str, n: usize, from: usize, to: usize) -> Option<usize> {
    (from..to).filter(|&i| lines[i].trim() == header).nth(n)
}

// ---- print ---------------------------------------------------------------

/// Serialises a scenario back to the file format.
pub fn print_scenario(s: &Scenario) -> String {
    let secs = |d: SimDuration| d.as_secs_f64();
    let file = ScenarioFile {
        name: s.name.clone(),
        run: RunFile {
            duration: s.run.duration.as_secs_f64(),
            seeds: s.run.seeds.clone(),
            protocols: s.run.protocols.iter().map(|p| p.name().to_string()).collect(),
            path: s.paths[s.run.path].id.clone(),
            coverage_dt: secs(s.run.coverage_dt),
            coverage_resolution: secs(s.run.coverage_resolution),
        },
        traffic: TrafficFile {
            interval: secs(s.traffic.interval),
            payload_len: s.traffic.payload_len,
            start: s.traffic.start.as_secs_f64(),
            flow_id: s.traffic.flow_id.0,
            key_secret: s.traffic.key_secret.clone(),
        },
        link: LinkFile {
            frame_tx_latency: secs(s.link.frame_tx_latency),
            ack_timeout: secs(s.link.ack_timeout),
            association_delay: secs(s.link.association_delay),
            address_config_delay: secs(s.link.address_config_delay),
            wired_rtt_to_proxy: secs(s.link.wired_rtt_to_proxy),
            scan_interval: secs(s.link.scan_interval),
            link_loss_timeout: secs(s.link.link_loss_timeout),
        },
        abps: AbpsFile {
            retry_interval: secs(s.abps.retry_interval),
            keepalive_interval: secs(s.abps.keepalive_interval),
            failure_threshold: s.abps.failure_threshold,
            seq_window: s.abps.seq_window,
            proxy_to_correspondent: secs(s.abps.proxy_to_correspondent),
        },
        mipv6: Mipv6File {
            router_adv_interval: secs(s.mipv6.router_adv_interval),
            dad_delay: secs(s.mipv6.dad_delay),
            binding_update_rtt: secs(s.mipv6.binding_update_rtt),
            return_routability_rtt: secs(s.mipv6.return_routability_rtt),
            home_agent_detour_latency: secs(s.mipv6.home_agent_detour_latency),
            route_optimization: s.mipv6.route_optimization,
        },
        lisp: LispFile {
            map_request_rtt: secs(s.lisp.map_request_rtt),
            map_cache_update_delay: secs(s.lisp.map_cache_update_delay),
            encap_latency: secs(s.lisp.encap_latency),
            non_lisp_config_delay: secs(s.lisp.non_lisp_config_delay),
            correspondent_lisp_enabled: s.lisp.correspondent_lisp_enabled,
        },
        adhoc: s.adhoc.as_ref().map(|a| AdhocFile {
            range: a.range,
            t_max: secs(a.t_max),
            ttl: a.ttl,
            hop_latency: secs(a.hop_latency),
            origin: a.nodes[a.origin].0.clone(),
            gateway: a.gateway.map(|g| a.nodes[g].0.clone()),
            area: a.area.map(|ar| match ar {
                Area::Circle { center, radius } => AreaFile::Circle {
                    center: [center.x, center.y],
                    radius,
                },
                Area::Rect { min, max } => AreaFile::Rect {
                    min: [min.x, min.y],
                    max: [max.x, max.y],
                },
            }),
            node: a
                .nodes
                .iter()
                .map(|(id, p)| AdhocNodeFile {
                    id: id.clone(),
                    x: p.x,
                    y: p.y,
                })
                .collect(),
        }),
        access_point: s
            .access_points
            .iter()
            .map(|ap| ApFile {
                id: ap.id.clone(),
                x: ap.position.x,
                y: ap.position.y,
                range: ap.range,
                wlan: ap.wlan_id.clone(),
                wired_latency: ap.wired_latency_to_internet,
            })
            .collect(),
        obstacle: s
            .obstacles
            .iter()
            .map(|o| ObstacleFile {
                id: o.id.clone(),
                vertices: o.obstacle.vertices().iter().map(|v| [v.x, v.y]).collect(),
            })
            .collect(),
        path: s
            .paths
            .iter()
            .map(|p| PathFile {
                id: p.id.clone(),
                speed: p.speed,
                segment_speeds: p.speed.is_none().then(|| p.path.segment_speeds().to_vec()),
                waypoints: p.path.waypoints().iter().map(|v| [v.x, v.y]).collect(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("scenario serialises")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "mini"

[run]
duration = 60.0
seeds = [1, 2]
path = "walk"

[[access_point]]
id = "ap1"
x = 0.0
y = 0.0
range = 50.0
wlan = "wlan-1"

[[access_point]]
id = "ap2"
x = 80.0
y = 0.0
range = 50.0
wlan = "wlan-2"

[[path]]
id = "walk"
speed = 1.5
waypoints = [[0.0, 0.0], [80.0, 0.0]]
"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.access_points.len(), 2);
        assert_eq!(s.link, LinkParams::default());
        assert_eq!(s.abps, AbpsParams::default());
        assert_eq!(s.run.protocols, Protocol::ALL.to_vec());
        assert_eq!(s.run.duration, SimTime::from_millis(60_000));
    }

    #[test]
    fn negative_range_names_key_and_line() {
        let bad = MINIMAL.replacen("range = 50.0", "range = -5.0", 1);
        let err = parse_scenario(&bad).unwrap_err();
        assert!(err.mentions("range"), "{err}");
        let d = &err.0[0];
        assert_eq!(d.key, "access_point[0].range");
        let line = bad.lines().position(|l| l.contains("range = -5.0")).unwrap() + 1;
        assert_eq!(d.line, Some(line));
    }

    #[test]
    fn second_table_line_is_found() {
        let bad = MINIMAL.replace("wlan = \"wlan-2\"", "wlan = \"wlan-1\"");
        let err = parse_scenario(&bad).unwrap_err();
        let d = &err.0[0];
        assert_eq!(d.key, "access_point[1].wlan");
        let line = bad
            .lines()
            .collect::<Vec<_>>()
            .iter()
            .rposition(|l| l.contains("wlan = \"wlan-1\""))
            .unwrap()
            + 1;
        assert_eq!(d.line, Some(line));
    }

    #[test]
    fn unknown_key_rejected() {
        let bad = MINIMAL.replace("speed = 1.5", "spead = 1.5");
        let err = parse_scenario(&bad).unwrap_err();
        assert!(err.to_string().contains("spead"), "{err}");
        assert!(err.0[0].line.is_some());
    }

    #[test]
    fn missing_section_rejected() {
        let bad = MINIMAL.replace("[run]", "[runx]");
        let err = parse_scenario(&bad).unwrap_err();
        assert!(!err.0.is_empty());
        let no_aps: String = MINIMAL.split("[[access_point]]").next().unwrap().to_string()
            + "[[path]]\nid = \"walk\"\nspeed = 1.0\nwaypoints = [[0.0, 0.0], [1.0, 0.0]]\n";
        let err = parse_scenario(&no_aps).unwrap_err();
        assert!(err.mentions("access_point"), "{err}");
    }

    #[test]
    fn dangling_path_reference() {
        let bad = MINIMAL.replace("path = \"walk\"", "path = \"nowhere\"");
        let err = parse_scenario(&bad).unwrap_err();
        assert_eq!(err.0[0].key, "run.path");
        assert_eq!(err.0[0].line, Some(7));
    }

    #[test]
    fn ack_timeout_bound() {
        let bad = format!("{MINIMAL}\n[link]\nack_timeout = 0.001\n");
        let err = parse_scenario(&bad).unwrap_err();
        assert!(err.mentions("ack_timeout"), "{err}");
    }

    #[test]
    fn print_then_parse_is_identity() {
        let s = parse_scenario(MINIMAL).unwrap();
        let again = parse_scenario(&print_scenario(&s)).unwrap();
        assert_eq!(s, again);
    }
}
