use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use tnlab::models::{causality_reference, CausalityParams};
use tnlab::pathspace::{char_from_dist, dist_from_char, wiener_check, DistKind, PathDistribution, PathGrid};
use tnlab::signals::freq_split;
use tnlab::timenormal::{tn_broad, tn_gkk};
use tnlab::{build_system, make_grid, OpId, Signal};

fn split(c: &mut Criterion) {
    let grid = make_grid(0.0, 0.1, 1024).unwrap();
    let f = Signal::from_real(grid, 1, |_, t| (0.7 * t).sin() + 0.3 * (2.1 * t).cos());
    c.bench_function("freq_split n=1024", |b| b.iter(|| freq_split(black_box(&f))));
}

fn lattice(c: &mut Criterion) {
    let grid = PathGrid::centred(3, 16, 0.1, 4.0).unwrap();
    let p = PathDistribution::from_fn(grid, DistKind::Probability, "bench", |x| {
        (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()
    });
    c.bench_function("char round trip L=3 B=16", |b| {
        b.iter(|| dist_from_char(&char_from_dist(black_box(&p)), "bench").unwrap())
    });
}

fn moments(c: &mut Criterion) {
    let model = build_system(causality_reference(&CausalityParams::default(), 1.0).unwrap()).unwrap();
    let times = [300, 340];
    c.bench_function("tn_broad m=2", |b| b.iter(|| tn_broad(&model, black_box(&times), &OpId::A(0)).unwrap()));
    c.bench_function("tn_gkk m=2", |b| b.iter(|| tn_gkk(&model, black_box(&times), &OpId::A(0)).unwrap()));
}

fn wiener(c: &mut Criterion) {
    c.bench_function("wiener 1e4 samples", |b| b.iter(|| wiener_check(0.01, 10_000, black_box(7)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = split, lattice, moments, wiener
}
criterion_main!(benches);
