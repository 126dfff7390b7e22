use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use plaplace_bench::{initial, problem};
use plaplace_core::{prox_step, PLaplacian, ProxConfig};

fn prox(c: &mut Criterion) {
    let mut group = c.benchmark_group("prox_step");
    for (dim, n) in [(1, 256), (1, 1024), (2, 64), (2, 128)] {
        let pb = problem(dim, n, 1);
        let u0 = initial(&pb);
        let op = PLaplacian::new(pb.p, pb.epsilon, pb.delta);
        let cfg = ProxConfig::default();
        group.bench_function(format!("d{dim}_n{n}"), |b| {
            b.iter(|| prox_step(black_box(&u0), pb.dt, &op, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = prox
}
criterion_main!(benches);
