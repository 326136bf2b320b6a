use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gaugeopt::gauge::{gauge, gauge_p};
use gaugeopt::machine::{default_gamma, solve_bnb, solve_convex, solve_dual_alternating, solve_oracle};
use gaugeopt::optcore::{capped_lsq, LsqOptions, LsqWork};
use gaugeopt::rng::{seeded, standard_normals};
use gaugeopt_bench::{canonical_problem, gaussian_alphabet};

fn bench_gauge(c: &mut Criterion) {
    let mut group = c.benchmark_group("gauge");
    let a = gaussian_alphabet(6, 16, 1);
    let x = standard_normals(&mut seeded(2), 6);
    group.bench_function("lp", |b| b.iter(|| gauge(black_box(&a), black_box(&x)).unwrap()));
    for p in [1, 2, 3] {
        group.bench_with_input(BenchmarkId::new("gauge_p", p), &p, |b, &p| {
            b.iter(|| gauge_p(black_box(&a), black_box(&x), p, 1_000_000).unwrap())
        });
    }
    group.finish();
}

fn bench_capped_lsq(c: &mut Criterion) {
    let mut group = c.benchmark_group("capped_lsq");
    for (d, m) in [(8, 16), (20, 40)] {
        let prob = canonical_problem(d, m, 3, 3);
        let work = LsqWork::new(prob.sensing(), prob.y());
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{}", 2 * d)), &work, |b, work| {
            b.iter(|| capped_lsq(work, 3.0, None, &[], &LsqOptions::default()))
        });
    }
    group.finish();
}

fn bench_machines(c: &mut Criterion) {
    let mut group = c.benchmark_group("machine");
    group.sample_size(20);
    let prob = canonical_problem(10, 24, 3, 4);
    group.bench_function("oracle_p3_n20", |b| b.iter(|| solve_oracle(black_box(&prob), 1_000_000).unwrap()));
    group.bench_function("bnb_p3_n20", |b| b.iter(|| solve_bnb(black_box(&prob), &[], None).unwrap()));
    let gamma = default_gamma(&prob);
    group.bench_function("dual_alt_p3_n20", |b| b.iter(|| solve_dual_alternating(black_box(&prob), gamma, 200).unwrap()));
    let convex = prob.with_p(prob.n_atoms()).unwrap();
    group.bench_function("convex_n20", |b| b.iter(|| solve_convex(black_box(&convex)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_gauge, bench_capped_lsq, bench_machines);
criterion_main!(benches);
