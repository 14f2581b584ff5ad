use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use nonarch_bench::{closure_group, measure_pair, norm_pair};
use nonarch_core::boundedness::certify;
use nonarch_core::measures::prokhorov;

fn bench_gi_distance(c: &mut Criterion) {
    let (a, b) = norm_pair();
    c.bench_function("gi_distance_3x3_ramified", |bch| {
        bch.iter(|| black_box(&a).gi_distance(black_box(&b)).unwrap())
    });
}

fn bench_prokhorov(c: &mut Criterion) {
    let (mu, nu) = measure_pair();
    c.bench_function("prokhorov_8x5_atoms", |bch| {
        bch.iter(|| prokhorov(black_box(&mu), black_box(&nu)).unwrap())
    });
}

fn bench_lattice_closure(c: &mut Criterion) {
    let group = closure_group();
    c.bench_function("certify_conjugated_unimodular_pair", |bch| {
        bch.iter(|| certify(black_box(&group), 64, 4).unwrap())
    });
}

criterion_group!(benches, bench_gi_distance, bench_prokhorov, bench_lattice_closure);
criterion_main!(benches);
