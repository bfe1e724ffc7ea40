use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use obsynth_bench::{chain_plant, example_plant};
use obsynth_core::positive::linf_gain_closed;
use obsynth_core::synthesis::{design_ct, design_relaxed};
use obsynth_core::{linf_gain_lp, Matrix, ObserverSpec, PopulationModel};
use std::hint::black_box;

fn design(c: &mut Criterion) {
    let mut group = c.benchmark_group("design");
    let spec = ObserverSpec::default();
    for (name, a12) in [("case1", 1.0), ("case2", -1.0)] {
        let sys = example_plant(a12);
        group.bench_function(name, |b| b.iter(|| design_ct(black_box(&sys), &spec).unwrap()));
    }
    let relaxed = ObserverSpec::relaxed().with_box(2, 1, 10.0);
    let sys = example_plant(1.0);
    group.bench_function("case1_relaxed", |b| b.iter(|| design_relaxed(black_box(&sys), &relaxed).unwrap()));
    let pop = PopulationModel::benchmark().linear_system();
    let boxed = ObserverSpec::default().with_box(3, 1, 5.0);
    group.bench_function("population", |b| b.iter(|| design_ct(black_box(&pop), &boxed).unwrap()));
    for n in [4, 8, 16] {
        let sys = chain_plant(n);
        let spec = ObserverSpec::default().with_box(n, 1, 5.0);
        group.bench_with_input(BenchmarkId::new("chain", n), &sys, |b, sys| b.iter(|| design_ct(sys, &spec).unwrap()));
    }
    group.finish();
}

fn gain(c: &mut Criterion) {
    let mut group = c.benchmark_group("gain");
    for n in [4, 8, 16] {
        let sys = chain_plant(n);
        let m = Matrix::identity(n);
        let f = Matrix::zeros(n, 1);
        group.bench_with_input(BenchmarkId::new("closed", n), &sys, |b, s| {
            b.iter(|| linf_gain_closed(&s.a, &s.e, &m, &f).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("lp", n), &sys, |b, s| b.iter(|| linf_gain_lp(&s.a, &s.e, &m, &f).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, design, gain);
criterion_main!(benches);
