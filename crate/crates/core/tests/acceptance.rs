//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shiresim::abps::{sign, Datagram, Direction, FlowId, FlowKey, ProxyServer};
use shiresim::broadcast::{simulate_broadcast, BackoffParams, BroadcastMessage, Suppression};
use shiresim::experiment::run_matrix;
use shiresim::handover::simulate;
use shiresim::link::Locator;
use shiresim::metrics::downtime_oracle;
use shiresim::oracle::{broadcast_enumeration_oracle, random_connected_topology};
use shiresim::{DowntimeCause, Point2D, Protocol, Scenario, SimDuration};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

fn c1_reproduction() -> Outcome {
    let sc = Scenario::bundled();
    let t0 = Instant::now();
    let m = run_matrix(&sc, &Protocol::ALL, &SEEDS, None).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed().as_secs_f64();
    if let Some(f) = m.failures().next() {
        return Err(format!(
            "{} seed {}: {}",
            f.protocol,
            f.seed,
            f.failure.as_deref().unwrap_or("")
        ));
    }
    let abps = m.summary(Protocol::Abps).ok_or("no abps summary")?;
    let mip = m.summary(Protocol::Mipv6).ok_or("no mipv6 summary")?;
    let lisp = m.summary(Protocol::Lisp).ok_or("no lisp summary")?;
    let n = abps.per_handover.len();
    if n == 0 || mip.per_handover.len() != n || lisp.per_handover.len() != n {
        return Err(format!(
            "handover counts differ: abps {n}, mipv6 {}, lisp {}",
            mip.per_handover.len(),
            lisp.per_handover.len()
        ));
    }
    let mut abps_means = Vec::new();
    for i in 0..n {
        let (a, mp, l) = (&abps.per_handover[i], &mip.per_handover[i], &lisp.per_handover[i]);
        if a.samples.len() < SEEDS.len() {
            return Err(format!("handover {} seen in only {} abps runs", i + 1, a.samples.len()));
        }
        if a.cause == DowntimeCause::Handover {
            if !(0.02..=0.10).contains(&a.mean) {
                return Err(format!(
                    "abps handover {} mean {:.4} s outside [0.02, 0.10]",
                    i + 1,
                    a.mean
                ));
            }
            abps_means.push(a.mean);
        }
        if mp.mean <= 5.0 {
            return Err(format!("mipv6 handover {} mean {:.3} s not > 5", i + 1, mp.mean));
        }
        if lisp.per_handover[i].mean <= 3.0 {
            return Err(format!("lisp handover {} mean {:.3} s not > 3", i + 1, l.mean));
        }
        if !(a.mean < l.mean && l.mean < mp.mean) {
            return Err(format!(
                "ordering broken at handover {}: abps {:.3} lisp {:.3} mipv6 {:.3}",
                i + 1,
                a.mean,
                l.mean,
                mp.mean
            ));
        }
    }
    if elapsed >= 10.0 {
        return Err(format!("30 runs took {elapsed:.2} s"));
    }
    let abps_mean = abps_means.iter().sum::<f64>() / abps_means.len() as f64;
    Ok(format!(
        "{n} handovers x {} seeds; abps {abps_mean:.3} s, lisp {:.3} s, mipv6 {:.3} s; {elapsed:.2} s wall",
        SEEDS.len(),
        lisp.mean,
        mip.mean
    ))
}

fn c2_gap() -> Outcome {
    let sc = Scenario::bundled();
    let gaps = sc.coverage_map().gaps();
    let &(g0, g1) = gaps
        .iter()
        .max_by_key(|(a, b)| *b - *a)
        .ok_or("bundled scenario has no coverage gap")?;
    let gap = (g1 - g0).as_secs_f64();
    let mut worst: BTreeMap<Protocol, (f64, f64)> = BTreeMap::new();
    for p in Protocol::ALL {
        for seed in SEEDS {
            let run = simulate(&sc, p, seed).map_err(|e| e.to_string())?;
            let rec = run
                .downtimes
                .iter()
                .find(|d| d.cause == DowntimeCause::CoverageGap && d.start <= g1 && d.end >= g0)
                .ok_or_else(|| format!("{p} seed {seed}: no coverage_gap record spanning the gap"))?;
            let d = rec.duration_s();
            if d < gap {
                return Err(format!(
                    "{p} seed {seed}: downtime {d:.4} s shorter than gap {gap:.4} s"
                ));
            }
            let e = worst.entry(p).or_insert((f64::INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.min(d - gap);
            e.1 = e.1.max(d - gap);
        }
    }
    let (a_min, a_max) = worst[&Protocol::Abps];
    let (m_min, _) = worst[&Protocol::Mipv6];
    let (l_min, _) = worst[&Protocol::Lisp];
    if a_max > 0.1 {
        return Err(format!("abps excess {a_max:.4} s > 0.1 s"));
    }
    if m_min < 2.0 {
        return Err(format!("mipv6 excess {m_min:.3} s < 2.0 s"));
    }
    if l_min < 1.0 {
        return Err(format!("lisp excess {l_min:.3} s < 1.0 s"));
    }
    Ok(format!(
        "gap {gap:.3} s; excess abps {a_min:.3}..{a_max:.3} s, mipv6 >= {m_min:.3} s, lisp >= {l_min:.3} s"
    ))
}

fn c3_oracle() -> Outcome {
    let mut runs = 0;
    let mut records = 0;
    let scenarios = [Scenario::bundled(), common::two_nic(), common::flapping()];
    for sc in &scenarios {
        let seeds: &[u64] = if sc.name == "smart-shire" { &SEEDS } else { &[1, 2] };
        for p in Protocol::ALL {
            for &seed in seeds {
                let run = simulate(sc, p, seed).map_err(|e| e.to_string())?;
                let oracle = downtime_oracle(&run.log.to_text()).map_err(|e| e.to_string())?;
                if oracle != run.downtimes {
                    return Err(format!(
                        "{} {p} seed {seed}: online {:?} vs oracle {:?}",
                        sc.name, run.downtimes, oracle
                    ));
                }
                runs += 1;
                records += oracle.len();
            }
        }
    }
    if runs < 30 {
        return Err(format!("only {runs} runs"));
    }
    Ok(format!("{runs} runs, {records} records identical"))
}

fn collect_files(dir: &Path, out: &mut BTreeMap<String, Vec<u8>>, root: &Path) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out, root)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root").display().to_string();
            out.insert(rel, fs::read(&path)?);
        }
    }
    Ok(())
}

fn c4_determinism() -> Outcome {
    let sc = Scenario::bundled();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seeds = [1, 2, 3];
    run_matrix(&sc, &Protocol::ALL, &seeds, Some(a.path())).map_err(|e| e.to_string())?;
    // Reverse the order of the second invocation; outputs must not care.
    let mut rev = Protocol::ALL;
    rev.reverse();
    run_matrix(&sc, &rev, &[3, 2, 1], Some(b.path())).map_err(|e| e.to_string())?;
    let (mut fa, mut fb) = (BTreeMap::new(), BTreeMap::new());
    collect_files(a.path(), &mut fa, a.path()).map_err(|e| e.to_string())?;
    collect_files(b.path(), &mut fb, b.path()).map_err(|e| e.to_string())?;
    let mut compared = 0;
    let mut bytes = 0;
    for (name, data) in &fa {
        // The comparison file's column order follows the protocol order.
        if name.ends_with(".dat") {
            continue;
        }
        match fb.get(name) {
            Some(other) if other == data => {
                compared += 1;
                bytes += data.len();
            }
            Some(_) => return Err(format!("{name} differs between executions")),
            None => return Err(format!("{name} missing from second execution")),
        }
    }
    if compared < 18 {
        return Err(format!("only {compared} files compared"));
    }
    Ok(format!(
        "{compared} files ({:.1} MB) byte-identical",
        bytes as f64 / 1e6
    ))
}

fn c5_identification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let flows: Vec<(FlowId, FlowKey)> = (1..=8)
        .map(|f| (FlowId(f), FlowKey::derive(&format!("secret-{f}"), FlowId(f))))
        .collect();
    let mut server = ProxyServer::new(1024);
    for (f, k) in &flows {
        server.add_flow(*f, k.clone(), "cn");
    }
    let (mut valid_ok, mut tampered_rejected) = (0, 0);
    const N: usize = 1_000;
    for i in 0..N {
        let (flow, key) = &flows[rng.random_range(0..flows.len())];
        let len = rng.random_range(0..200);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let dir = if rng.random() { Direction::Up } else { Direction::Down };
        let mut d = Datagram::new(*flow, rng.random(), dir, &payload);
        d.auth_tag = sign(&d, key);
        d.src_locator = rng.random::<bool>().then(|| Locator(rng.random()));
        d.hop_trace = (0..rng.random_range(0..8)).map(|_| rng.random()).collect();
        if server.identify_sender(&d) == Ok(*flow) {
            valid_ok += 1;
        } else {
            return Err(format!("valid datagram {i} not identified"));
        }
        let mut t = d.clone();
        match i % 6 {
            0 => t.seq ^= 1 << rng.random_range(0..64),
            1 => t.flow_id = flows[(flow.0 as usize) % flows.len()].0,
            2 => t.payload_digest[rng.random_range(0..16)] ^= 1 << rng.random_range(0..8),
            3 => t.auth_tag.0[rng.random_range(0..16)] ^= 1 << rng.random_range(0..8),
            4 => {
                t.direction = if dir == Direction::Up {
                    Direction::Down
                } else {
                    Direction::Up
                }
            }
            _ => t.payload_len ^= 1 << rng.random_range(0..16),
        }
        if server.identify_sender(&t).is_err() {
            tampered_rejected += 1;
        } else {
            return Err(format!("tampered datagram {i} (mutation {}) accepted", i % 6));
        }
    }
    Ok(format!(
        "{valid_ok}/{N} valid identified, {tampered_rejected}/{N} tampered rejected"
    ))
}

fn c6_exactly_once() -> Outcome {
    let sc = common::flapping();
    let run = simulate(&sc, Protocol::Abps, 1).map_err(|e| e.to_string())?;
    run.check_invariants().map_err(|e| e.to_string())?;
    let s = &run.stats;
    if s.retransmissions < 50 {
        return Err(format!("only {} retransmissions", s.retransmissions));
    }
    // Datagrams generated in the final second may legitimately still be in flight.
    let settled = s.datagrams.saturating_sub(100) as usize;
    let missing = s.cn_receipts[..settled].iter().filter(|&&c| c == 0).count();
    let dups = s.cn_duplicates();
    if missing > 0 || dups > 0 {
        return Err(format!("{missing} missing, {dups} duplicates"));
    }
    Ok(format!(
        "{} retransmissions, {} link flaps, {} proxy duplicate drops, {} datagrams each delivered once",
        s.retransmissions,
        s.link_downs,
        s.dup_drops,
        s.cn_delivered()
    ))
}

fn c7_broadcast() -> Outcome {
    let backoff = BackoffParams {
        t_max: 0.1,
        nominal_range: 30.0,
    };
    let msg = |origin: Point2D| BroadcastMessage {
        msg_id: 1,
        origin,
        ttl: 32,
        area: None,
        payload_len: 64,
    };
    let mut dense = 0;
    for k in 0..20u64 {
        let n = 4 + (k as usize % 12);
        let topo = random_connected_topology(700 + k, n, 80.0, 30.0);
        let out = simulate_broadcast(
            &topo,
            0,
            &msg(topo.positions[0]),
            &backoff,
            SimDuration::ZERO,
            Suppression::default(),
        );
        if !out.all_delivered() {
            return Err(format!(
                "topology {k} ({n} nodes): {} of {n} delivered",
                out.delivered_count()
            ));
        }
        if topo.has_triangle() {
            dense += 1;
            if out.transmissions() >= n {
                return Err(format!(
                    "topology {k}: {} transmissions for {n} nodes",
                    out.transmissions()
                ));
            }
        }
    }
    let mut enumerated = 0;
    for k in 0..300u64 {
        let n = 2 + (k as usize % 5);
        let topo = random_connected_topology(9_000 + k, n, 60.0, 30.0);
        for rule in [Suppression::NeighborCoverage, Suppression::AnyDuplicate] {
            let r = broadcast_enumeration_oracle(&topo, 0, &msg(topo.positions[0]), &backoff, rule);
            if !r.passed() {
                return Err(r.to_string());
            }
            enumerated += 1;
        }
    }
    Ok(format!(
        "20 topologies fully delivered ({dense} with a triangle, all below flooding); {enumerated} enumerations match"
    ))
}

fn c8_switchover() -> Outcome {
    let sc = common::two_nic();
    let bound = sc.link.ack_timeout
        + sc.abps.retry_interval
        + sc.link.frame_tx_latency
        + sc.link.frame_tx_latency
        + sc.link.wired_rtt_to_proxy.halved()
        + sc.abps.proxy_to_correspondent;
    let mut worst = SimDuration::ZERO;
    for seed in [1, 2, 3, 4, 5] {
        let run = simulate(&sc, Protocol::Abps, seed).map_err(|e| e.to_string())?;
        let recs = downtime_oracle(&run.log.to_text()).map_err(|e| e.to_string())?;
        if recs.len() != 1 {
            return Err(format!("seed {seed}: expected one switchover, got {}", recs.len()));
        }
        let r = &recs[0];
        // NIC B must already be up when NIC A's first frame fails.
        let b_up = run
            .log
            .records()
            .iter()
            .any(|l| l.kind == "link-up" && l.time <= r.start && run.log.entity_name(l.entity) == "nic1");
        if !b_up {
            return Err(format!("seed {seed}: nic1 was not up before the failure"));
        }
        worst = worst.max(r.end - r.start);
    }
    if worst > bound {
        return Err(format!("worst downtime {worst} exceeds bound {bound}"));
    }
    Ok(format!("worst downtime {worst} <= bound {bound}"))
}

fn main() -> ExitCode {
    let checks: [Check; 8] = [
        ("reproduction of the downtime comparison", c1_reproduction),
        ("coverage-gap behaviour", c2_gap),
        ("online metric equals log oracle", c3_oracle),
        ("determinism across executions", c4_determinism),
        ("sender identification under fuzzing", c5_identification),
        ("exactly-once relay under NIC flapping", c6_exactly_once),
        ("broadcast delivery and suppression", c7_broadcast),
        ("two-NIC switchover bound", c8_switchover),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        match f() {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", checks.len());
        ExitCode::FAILURE
    }
}
