use criterion::{black_box, criterion_group, criterion_main, Criterion};

use robust_asymp::hyperopt::HyperBounds;
use robust_asymp::model::sample_dataset;
use robust_asymp::simulation::{erm_convex, erm_ridge, gamp, BayesChannel, ConvexSolverConfig, GampConfig, GaussianPrior};
use robust_asymp::*;

fn model() -> OutlierModel {
    OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap()
}

fn state_evolution(c: &mut Criterion) {
    let m = model();
    let cfg = FixedPointConfig::with_tolerance(1e-10);
    let mut g = c.benchmark_group("state_evolution");
    for loss in [LossSpec::L2, LossSpec::L1, LossSpec::Huber { a: 1.0 }] {
        g.bench_function(loss.name(), |b| {
            b.iter(|| solve_fixed_point(loss, &m, black_box(10.0), 0.5, &cfg).unwrap())
        });
    }
    g.bench_function("ridge_explicit", |b| b.iter(|| ridge_explicit(&m, black_box(10.0), 0.5).unwrap()));
    g.bench_function("bayes", |b| b.iter(|| bo_fixed_point(&m, black_box(10.0), &cfg).unwrap()));
    g.finish();
}

fn hyperopt(c: &mut Criterion) {
    let m = model();
    let mut g = c.benchmark_group("hyperopt");
    g.sample_size(10);
    g.bench_function("huber_gen", |b| {
        b.iter(|| optimize_hyperparams(LossSpec::Huber { a: 1.0 }, &m, black_box(10.0), Target::Gen, &HyperBounds::default()).unwrap())
    });
    g.finish();
}

fn finite_size(c: &mut Criterion) {
    let m = model();
    let data = sample_dataset(&m, 2000, 200, 0).unwrap();
    let cfg = ConvexSolverConfig::default();
    let mut g = c.benchmark_group("finite_size_d200_alpha10");
    g.sample_size(10);
    g.bench_function("ridge", |b| b.iter(|| erm_ridge(&data, 0.5).unwrap()));
    g.bench_function("huber", |b| b.iter(|| erm_convex(&data, LossSpec::Huber { a: 1.0 }, 0.5, &cfg).unwrap()));
    g.bench_function("l1", |b| b.iter(|| erm_convex(&data, LossSpec::L1, 0.5, &cfg).unwrap()));
    g.bench_function("gamp", |b| {
        b.iter(|| gamp(&data, &BayesChannel::new(&m), &GaussianPrior::bayes(), &GampConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, state_evolution, hyperopt, finite_size);
criterion_main!(benches);
