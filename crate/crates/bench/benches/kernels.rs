use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dbrs_bench::{networks, state};
use dbrs_core::dynamics::integrate_full;
use dbrs_core::{GradientEvaluator, IntegratorOptions, Scale, SlowManifoldSolver};

fn psi(c: &mut Criterion) {
    let mut g = c.benchmark_group("psi");
    for (name, net) in networks() {
        let solver = SlowManifoldSolver::new(&net);
        let q = solver.project(&state(net.num_species()));
        g.bench_function(name, |b| b.iter(|| solver.psi(black_box(q.as_slice())).unwrap()));
    }
    g.finish();
}

fn legendre(c: &mut Criterion) {
    let mut g = c.benchmark_group("primal_dissipation");
    for (name, net) in networks() {
        let x = state(net.num_species());
        let v = net.reaction_rate(&x, 0.1).unwrap();
        let ev = GradientEvaluator::new(&net, Scale::Eps(0.1)).unwrap();
        g.bench_function(name, |b| b.iter(|| ev.primal_dissipation(black_box(&x), black_box(v.as_slice())).unwrap()));
    }
    g.finish();
}

fn integrate(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrate_full");
    g.sample_size(10);
    for (name, net) in networks() {
        let x = state(net.num_species());
        let opts = IntegratorOptions::with_tolerances(1e-8, 1e-10);
        for eps in [1e-1, 1e-3] {
            g.bench_function(format!("{name}/eps={eps}"), |b| b.iter(|| integrate_full(&net, eps, black_box(&x), 1.0, &opts).unwrap()));
        }
    }
    g.finish();
}

criterion_group!(benches, psi, legendre, integrate);
criterion_main!(benches);
