use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use polar_ray_bench::fixture;
use polar_ray_core::{closed_flow, complex_structure, flow, polarization, Coord};

fn flows(c: &mut Criterion) {
    let (_, prepared) = fixture("mixed-tc-c");
    let p = &prepared.points[0];
    c.bench_function("closed_flow/mixed", |b| {
        b.iter(|| closed_flow(&prepared.potential, &prepared.phi, black_box(p), black_box(5.0)))
    });
    c.bench_function("lie_series/mixed/N=30", |b| {
        b.iter(|| flow::lie_series(&prepared.potential, &prepared.phi, p, black_box(1.0), Coord::W(0), 30).unwrap())
    });
    c.bench_function("lie_series/mixed/N=1000", |b| {
        b.iter(|| flow::lie_series(&prepared.potential, &prepared.phi, p, black_box(100.0), Coord::W(0), 1000).unwrap())
    });
}

fn structures(c: &mut Criterion) {
    let (_, prepared) = fixture("weighted-c2");
    let p = &prepared.points[1];
    c.bench_function("complex_structure/weighted", |b| {
        b.iter(|| complex_structure(&prepared.potential, &prepared.phi, black_box(p), black_box(10.0)))
    });
}

fn sweeps(c: &mut Criterion) {
    for name in ["cylinder", "mixed-tc-c"] {
        let (scenario, prepared) = fixture(name);
        let p = &prepared.points[0];
        c.bench_function(&format!("convergence_sweep/{name}"), |b| {
            b.iter(|| polarization::convergence_sweep(&prepared.potential, &prepared.phi, p, &scenario.t_grid))
        });
    }
}

criterion_group!(benches, flows, structures, sweeps);
criterion_main!(benches);
