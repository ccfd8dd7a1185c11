use std::collections::HashSet;

use proptest::prelude::*;

use shiresim::abps::{sign, Datagram, Direction, FlowId, FlowKey, ProxyServer, RecentSeqWindow};
use shiresim::broadcast::{forward_delay, simulate_broadcast, BackoffParams, BroadcastMessage, Suppression, Topology};
use shiresim::link::{frame_fate, FrameOutcome, LinkParams, Locator};
use shiresim::metrics::{downtime_online, downtime_oracle, mean_ci95, TraceEvent};
use shiresim::scenario::{parse_scenario, print_scenario};
use shiresim::world::{covered, segment_blocked};
use shiresim::{
    AccessPoint, Engine, EventPayload, Obstacle, Point2D, Protocol, Scenario, SimDuration, SimTime, WaypointPath,
};

#[derive(Debug, Clone)]
struct Tick(u32);

impl EventPayload for Tick {
    fn kind(&self) -> &'static str {
        "tick"
    }

    fn detail(&self) -> String {
        format!("id={}", self.0)
    }
}

fn pt() -> impl Strategy<Value = Point2D> {
    (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Point2D::new(x, y))
}

fn rect() -> impl Strategy<Value = Obstacle> {
    (-40.0..40.0f64, -40.0..40.0f64, 0.5..20.0f64, 0.5..20.0f64)
        .prop_map(|(x, y, w, h)| Obstacle::rectangle(x, y, x + w, y + h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn engine_clock_is_monotone_and_cancelled_events_never_fire(
        times in prop::collection::vec(0u64..1_000_000, 1..60),
        cancel in prop::collection::vec(any::<bool>(), 60),
    ) {
        let mut eng: Engine<Tick> = Engine::new();
        let e = eng.register_entity("e");
        let mut cancelled = HashSet::new();
        for (i, &t) in times.iter().enumerate() {
            let h = eng.schedule(SimTime::from_micros(t), e, Tick(i as u32)).unwrap();
            if cancel[i] {
                eng.cancel(h);
                cancelled.insert(i as u32);
            }
        }
        let mut fired = Vec::new();
        let mut past_refused = true;
        eng.run_until(SimTime::MAX, |eng, ev| {
            fired.push(ev.payload.0);
            if eng.now() > SimTime::ZERO {
                past_refused &= eng.schedule(SimTime::ZERO, ev.target, Tick(u32::MAX)).is_err();
            }
            Ok(())
        }).unwrap();
        prop_assert!(past_refused);
        let log = eng.log().records();
        prop_assert!(log.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert_eq!(fired.len(), times.len() - cancelled.len());
        for id in &fired {
            prop_assert!(!cancelled.contains(id));
        }
    }

    #[test]
    fn occlusion_is_symmetric(a in pt(), b in pt(), obs in prop::collection::vec(rect(), 0..4)) {
        prop_assert_eq!(segment_blocked(a, b, &obs), segment_blocked(b, a, &obs));
    }

    #[test]
    fn coverage_is_monotone_in_range(p in pt(), q in pt(), r in 1.0..80.0f64, extra in 0.0..40.0f64,
                                     obs in prop::collection::vec(rect(), 0..3)) {
        let ap = |range| AccessPoint { id: "a".into(), position: q, range, wlan_id: "w".into(), wired_latency_to_internet: 0.0 };
        if covered(p, &ap(r), &obs) {
            prop_assert!(covered(p, &ap(r + extra), &obs));
        }
    }

    #[test]
    fn position_is_lipschitz(
        pts in prop::collection::vec(pt(), 2..6),
        speed in 0.5..20.0f64,
        t in 0.0..60.0f64,
        dt in 0.0..1.0f64,
    ) {
        prop_assume!(pts.windows(2).all(|w| w[0].distance(w[1]) > 1e-6));
        let path = WaypointPath::new(pts, speed).unwrap();
        let d = path.position_at_secs(t).distance(path.position_at_secs(t + dt));
        prop_assert!(d <= speed * dt + 1e-9, "moved {} in {}", d, dt);
    }

    #[test]
    fn frames_resolve_once_and_acks_imply_coverage(
        tx in 0u64..10_000_000,
        cut in 0u64..10_000_000,
        regain in 0u64..10_000_000,
    ) {
        let params = LinkParams::default();
        let (lo, hi) = (cut.min(regain), cut.max(regain));
        let covered_at = |t: SimTime| !(lo..hi).contains(&t.as_micros());
        let fate = frame_fate(SimTime::from_micros(tx), &params, covered_at);
        match fate.outcome {
            FrameOutcome::AckReceived { at } => {
                let arrival = fate.reached_ap.expect("ack implies reception");
                prop_assert!(covered_at(arrival));
                prop_assert!(at < SimTime::from_micros(tx) + params.ack_timeout);
            }
            FrameOutcome::AckTimeout { at } => {
                prop_assert_eq!(at, SimTime::from_micros(tx) + params.ack_timeout);
            }
        }
    }

    #[test]
    fn seq_window_accepts_each_seq_at_most_once(seqs in prop::collection::vec(0u64..300, 0..400)) {
        let mut w = RecentSeqWindow::default();
        let mut accepted = HashSet::new();
        for s in seqs {
            if w.accept(s, 1024) {
                prop_assert!(accepted.insert(s), "seq {} accepted twice", s);
            }
        }
    }

    #[test]
    fn identification_ignores_locator_and_trace(
        flow in 1u32..5,
        seq in any::<u64>(),
        payload in prop::collection::vec(any::<u8>(), 0..64),
        loc in prop::option::of(any::<u32>()),
        trace in prop::collection::vec(any::<u32>(), 0..10),
    ) {
        let mut server = ProxyServer::new(64);
        for f in 1..5 {
            server.add_flow(FlowId(f), FlowKey::derive("k", FlowId(f)), "cn");
        }
        let key = FlowKey::derive("k", FlowId(flow));
        let mut d = Datagram::new(FlowId(flow), seq, Direction::Up, &payload);
        d.auth_tag = sign(&d, &key);
        let base = server.identify_sender(&d);
        d.src_locator = loc.map(Locator);
        d.hop_trace = trace;
        prop_assert_eq!(server.identify_sender(&d), base);
        prop_assert_eq!(base, Ok(FlowId(flow)));
    }

    #[test]
    fn forward_delay_shrinks_with_distance(a in 0.0..200.0f64, b in 0.0..200.0f64, t_max in 0.001..1.0f64) {
        let p = BackoffParams { t_max, nominal_range: 100.0 };
        let (near, far) = (a.min(b), a.max(b));
        let (dn, df) = (forward_delay(near, &p), forward_delay(far, &p));
        prop_assert!(df <= dn);
        prop_assert!((0.0..=t_max).contains(&dn) && (0.0..=t_max).contains(&df));
    }

    #[test]
    fn broadcast_relays_at_most_once_and_reaches_everyone(
        pts in prop::collection::vec((0.0..60.0f64, 0.0..60.0f64), 2..12),
        any_dup in any::<bool>(),
    ) {
        let topo = Topology::new(pts.iter().map(|&(x, y)| Point2D::new(x, y)).collect(), 25.0, Vec::new());
        let msg = BroadcastMessage { msg_id: 7, origin: topo.positions[0], ttl: 64, area: None, payload_len: 10 };
        let backoff = BackoffParams { t_max: 0.1, nominal_range: 25.0 };
        let rule = if any_dup { Suppression::AnyDuplicate } else { Suppression::NeighborCoverage };
        let out = simulate_broadcast(&topo, 0, &msg, &backoff, SimDuration::ZERO, rule);
        let unique: HashSet<_> = out.transmitters.iter().collect();
        prop_assert_eq!(unique.len(), out.transmitters.len());
        prop_assert!(out.transmissions() <= topo.len());
        if topo.is_connected() && rule == Suppression::NeighborCoverage {
            prop_assert!(out.all_delivered());
        }
    }

    #[test]
    fn ci_half_width_is_nonnegative(xs in prop::collection::vec(-10.0..10.0f64, 2..30)) {
        let (mean, ci) = mean_ci95(&xs);
        prop_assert!(mean.is_finite());
        prop_assert!(ci.unwrap() >= 0.0);
    }
}

#[derive(Debug, Clone)]
enum Step {
    Timeout { seq: u64, back: u64 },
    Deliver { seq: u64 },
    Coverage { empty: bool },
}

fn step() -> impl Strategy<Value = (u64, Step)> {
    (
        0u64..50_000,
        prop_oneof![
            (0u64..40, 0u64..40_000).prop_map(|(seq, back)| Step::Timeout { seq, back }),
            (0u64..40).prop_map(|seq| Step::Deliver { seq }),
            any::<bool>().prop_map(|empty| Step::Coverage { empty }),
        ],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The online tracker and the log oracle agree on arbitrary traces, and
    /// records never overlap.
    #[test]
    fn online_tracker_matches_log_oracle(steps in prop::collection::vec(step(), 0..80)) {
        let mut now = 0u64;
        let mut trace = Vec::new();
        let mut log = String::new();
        let end = SimTime::from_micros(10_000_000);
        log.push_str(&format!("0,world,run,protocol=lisp seed=9 flow=3 end_us={}\n", end.as_micros()));
        for (dt, s) in steps {
            now += dt;
            let t = SimTime::from_micros(now);
            match s {
                Step::Timeout { seq, back } => {
                    let tx = SimTime::from_micros(now.saturating_sub(back));
                    trace.push((t, TraceEvent::DataTimeout { seq, tx }));
                    log.push_str(&format!("{now},nic0,timeout,nic=0 seq={seq} kind=data tx_us={}\n", tx.as_micros()));
                }
                Step::Deliver { seq } => {
                    trace.push((t, TraceEvent::Deliver { seq }));
                    log.push_str(&format!("{now},cn,deliver,seq={seq}\n"));
                }
                Step::Coverage { empty } => {
                    trace.push((t, TraceEvent::Coverage { empty }));
                    let set = if empty { "-" } else { "0" };
                    log.push_str(&format!("{now},world,coverage,ap=0 covered={} set={set}\n", u8::from(!empty)));
                }
            }
        }
        let online = downtime_online(Protocol::Lisp, 9, 3, &trace, end);
        let oracle = downtime_oracle(&log).unwrap();
        prop_assert_eq!(&online, &oracle);
        for w in online.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for r in &online {
            prop_assert!(r.end >= r.start);
        }
    }
}

fn tweak(sc: &Scenario, range: f64, speed: f64, ack_ms: u64) -> String {
    let mut text = print_scenario(sc);
    text = text.replacen("range = 40.0", &format!("range = {range}"), 1);
    text = text.replacen("speed = 2.5", &format!("speed = {speed}"), 1);
    text.replacen(
        "ack_timeout = 0.03",
        &format!("ack_timeout = {}", ack_ms as f64 / 1000.0),
        1,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parse_print_round_trip(range in 1.0..200.0f64, speed in 0.1..30.0f64, ack_ms in 5u64..500) {
        let text = tweak(&Scenario::bundled(), range, speed, ack_ms);
        let sc = parse_scenario(&text).unwrap();
        let again = parse_scenario(&print_scenario(&sc)).unwrap();
        prop_assert_eq!(sc, again);
    }
}
