use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use shiresim::broadcast::{simulate_broadcast, Suppression};
use shiresim::handover::simulate_with;
use shiresim::oracle::random_connected_topology;
use shiresim::world::segment_blocked;
use shiresim::{Point2D, Protocol, Scenario, SimDuration};

fn handover_runs(c: &mut Criterion) {
    let sc = Scenario::bundled();
    let map = sc.coverage_map();
    let mut g = c.benchmark_group("bundled_run");
    g.sample_size(10);
    for p in Protocol::ALL {
        g.bench_function(p.name(), |b| {
            b.iter(|| simulate_with(&sc, &map, p, black_box(1)).unwrap())
        });
    }
    g.finish();
}

fn coverage(c: &mut Criterion) {
    let sc = Scenario::bundled();
    c.bench_function("coverage_map", |b| b.iter(|| black_box(&sc).coverage_map()));
    let obstacles = sc.obstacle_shapes();
    c.bench_function("segment_blocked", |b| {
        b.iter(|| {
            segment_blocked(
                black_box(Point2D::new(30.0, 70.0)),
                black_box(Point2D::new(51.0, 60.0)),
                &obstacles,
            )
        })
    });
}

fn broadcast(c: &mut Criterion) {
    let sc = Scenario::bundled();
    let adhoc = sc.adhoc.as_ref().expect("bundled scenario has an adhoc section");
    let topo = random_connected_topology(3, 15, 100.0, 35.0);
    let msg = shiresim::broadcast::BroadcastMessage {
        origin: topo.positions[0],
        ..adhoc.message()
    };
    c.bench_function("broadcast_15_nodes", |b| {
        b.iter(|| {
            simulate_broadcast(
                &topo,
                0,
                &msg,
                &adhoc.backoff(),
                SimDuration::ZERO,
                Suppression::default(),
            )
        })
    });
}

criterion_group!(benches, handover_runs, coverage, broadcast);
criterion_main!(benches);
