//! Wall-clock cost of the pipeline stages on Example 1.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use delobs_bench::{example1, example1_with_plant};
use delobs_core::{causality_audit, certify, run_observer, simulate_plant, synthesize_default};

fn pipeline(c: &mut Criterion) {
    let sc = example1().unwrap();
    let (_, plant) = example1_with_plant().unwrap();
    let sched = synthesize_default(&sc, &plant.y, &plant.u).unwrap();

    let mut g = c.benchmark_group("example1");
    g.sample_size(10);
    g.bench_function("simulate", |b| b.iter(|| simulate_plant(black_box(&sc), &[0.6, 0.8]).unwrap()));
    g.bench_function("synthesize", |b| {
        b.iter(|| synthesize_default(black_box(&sc), &plant.y, &plant.u).unwrap())
    });
    g.bench_function("observe", |b| b.iter(|| run_observer(black_box(&sc), &plant, &sched).unwrap()));
    g.bench_function("certify", |b| b.iter(|| certify(black_box(&sched), &sc, &plant.y, &plant.u).unwrap()));
    g.bench_function("audit", |b| b.iter(|| causality_audit(black_box(&sched), &sc, &plant.y, &plant.u).unwrap()));
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
