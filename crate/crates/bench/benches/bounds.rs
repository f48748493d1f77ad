use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::{DMatrix, DVector};
use pcrlb::experiment::run_experiment;
use pcrlb::filters::{pf_step, ukf_step, ParticleSet, ResamplePolicy, UtParams};
use pcrlb::fim::{
    decompose_terms, fim_recursion_step, fim_via_decomposition, mean_cov_terms, mean_only_terms,
};
use pcrlb::SystemModel;
use pcrlb_bench::{belief, linear, small_experiment, ungm};
use std::hint::black_box;

fn fim_terms(c: &mut Criterion) {
    let model = ungm();
    let sb = belief(3.0, 2.0);
    let mb = belief(-5.0, 4.0);
    let x = DVector::from_element(1, 3.0);
    let mut g = c.benchmark_group("terms");
    g.bench_function("mean_only_ungm", |b| {
        b.iter(|| mean_only_terms(&model, 4, black_box(&x), &x).unwrap())
    });
    g.bench_function("mean_cov_ungm", |b| {
        b.iter(|| mean_cov_terms(&model, 4, black_box(&sb), &mb).unwrap())
    });
    g.bench_function("decompose_ungm", |b| {
        b.iter(|| decompose_terms(&model, 4, black_box(&sb), &mb).unwrap())
    });
    let dec = decompose_terms(&model, 4, &sb, &mb).unwrap();
    let j = DMatrix::from_element(1, 1, 0.3);
    g.bench_function("split_recursion_ungm", |b| {
        b.iter(|| fim_via_decomposition(black_box(&j), &dec).unwrap())
    });
    g.finish();
}

fn recursion(c: &mut Criterion) {
    let mut g = c.benchmark_group("recursion");
    for n in [1, 4, 8] {
        let model = linear(n);
        let x = DVector::zeros(n);
        let terms = mean_only_terms(&model, 0, &x, &x).unwrap();
        let j = DMatrix::identity(n, n);
        g.bench_function(format!("step_n{n}"), |b| {
            b.iter(|| fim_recursion_step(black_box(&j), &terms).unwrap())
        });
    }
    g.finish();
}

fn filters(c: &mut Criterion) {
    let model = ungm();
    let z = DVector::from_element(1, 4.0);
    let mut g = c.benchmark_group("filters");
    g.bench_function("ukf_step", |b| {
        let prior = belief(0.0, 20.0);
        b.iter(|| ukf_step(&model, 1, black_box(&prior), &z, &UtParams::default()).unwrap())
    });
    let particles = ParticleSet::from_prior(model.prior(), 1000, 7).unwrap();
    g.bench_function("pf_step_1000", |b| {
        b.iter_batched(
            || particles.clone(),
            |p| pf_step(&model, 1, &p, &z, 11, ResamplePolicy::EveryStep).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn experiment(c: &mut Criterion) {
    let cfg = small_experiment(4);
    let mut g = c.benchmark_group("experiment");
    g.sample_size(10);
    g.bench_function("ungm_4_runs", |b| {
        b.iter(|| run_experiment(black_box(&cfg)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, fim_terms, recursion, filters, experiment);
criterion_main!(benches);
