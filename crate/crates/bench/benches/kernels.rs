use criterion::{criterion_group, criterion_main, Criterion};
use geoext_bench::{particle, particle_candidate, particle_state, system};
use geoext_core::chaplygin::{build_structure, classify};
use geoext_core::dynamics::{integrate, nonholonomic_field, IntegrateOpts, NonholonomicFlow};
use geoext_core::extensions::{carriage_ansatz, combined_residual, condition_a_residual, condition_b_residual};
use geoext_core::parse;
use std::hint::black_box;

fn geometry(c: &mut Criterion) {
    let s = particle();
    let cand = particle_candidate(&s);
    let q = [0.2, 0.5, -0.1];
    c.bench_function("frame geometry (particle)", |b| b.iter(|| s.geometry(black_box(&q)).unwrap()));
    c.bench_function("(A′) residual (particle)", |b| {
        b.iter(|| condition_a_residual(&s, &cand, black_box(&q)).unwrap())
    });
    c.bench_function("(B′) residual (particle)", |b| {
        b.iter(|| condition_b_residual(&s, &cand, black_box(&q)).unwrap())
    });
    let st = particle_state();
    c.bench_function("nonholonomic field (particle)", |b| b.iter(|| nonholonomic_field(&s, black_box(&st)).unwrap()));
}

fn dynamics(c: &mut Criterion) {
    let s = particle();
    let st = particle_state();
    let flow = NonholonomicFlow::new(&s);
    c.bench_function("RK4 dt=1e-2, t=1 (particle)", |b| {
        b.iter(|| integrate(&flow, black_box(&st), 1.0, &IntegrateOpts::rk4(1e-2)).unwrap())
    });
}

fn carriage(c: &mut Criterion) {
    let s = system("carriage", &[("l", "1")]);
    let grid = s.domain.with_points(2).grid();
    c.bench_function("carriage scan residual, 32 points", |b| {
        b.iter(|| combined_residual(&s, &|x| carriage_ansatz(&s, x), black_box(0.5), &grid).unwrap())
    });
    c.bench_function("carriage classification", |b| {
        b.iter(|| {
            let st = build_structure(&s, &grid).unwrap();
            classify(&st, &st.reduced_grid(3), 1e-6).unwrap()
        })
    });
}

fn expressions(c: &mut Criterion) {
    let src = "exp(sin(x*y))/(1+z^2) - ln(1+x^2)*sqrt(2+cos(y))";
    c.bench_function("parse + differentiate", |b| {
        b.iter(|| parse(black_box(src)).unwrap().differentiate("x"))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = geometry, dynamics, carriage, expressions
}
criterion_main!(benches);
