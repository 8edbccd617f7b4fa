use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use presence_bench::{fragmentation, grid_case, runner};
use presence_core::brw::{u_grid, v_tilted};
use presence_core::frag::{simulate_fragmentation, v_levy};
use std::hint::black_box;

fn grid_recursion(c: &mut Criterion) {
    let mut g = c.benchmark_group("u_grid");
    g.sample_size(10);
    for n in [10, 40] {
        let case = grid_case(n, 0.01);
        g.bench_with_input(BenchmarkId::from_parameter(n), &case, |b, k| {
            b.iter(|| u_grid(&k.model, &k.f, k.n, &k.spec).unwrap())
        });
    }
    g.finish();
}

fn tilted(c: &mut Criterion) {
    let case = grid_case(50, 0.01);
    let mut g = c.benchmark_group("v_tilted");
    g.sample_size(10);
    for workers in [1, 4] {
        let r = runner(workers);
        g.bench_with_input(BenchmarkId::new("workers", workers), &r, |b, r| {
            b.iter(|| v_tilted(&case.model, &case.f, case.n, 2.0, 0.0, 20_000, r).unwrap())
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let d = fragmentation();
    let mut rng = runner(1).rng(0, 0);
    c.bench_function("simulate_fragmentation/t=6", |b| {
        b.iter(|| simulate_fragmentation(&d, black_box(6.0), None, &mut rng).unwrap())
    });
}

fn levy(c: &mut Criterion) {
    let d = fragmentation();
    let r = runner(1);
    let mut g = c.benchmark_group("v_levy");
    g.sample_size(10);
    g.bench_function("t=10", |b| {
        b.iter(|| v_levy(&d, 2.0, 10.0, 0.0, 0.0, 1.0, 20_000, &r).unwrap())
    });
    g.finish();
}

criterion_group!(benches, grid_recursion, tilted, simulation, levy);
criterion_main!(benches);
