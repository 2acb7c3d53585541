use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use uncertain_eval::ingestion::parse_netflix_training;
use uncertain_eval::{
    attach_variance, derive_rng, error_matrix, mc_metric_distribution, rmse_distribution, std_normal_cdf, Approach,
    AuditConfig, Metric, Scale, UncertaintyModel, NETFLIX_TEST_RATINGS,
};
use uncertain_eval_bench::{leaderboard, netflix_text, ratings, systems};

fn phi(c: &mut Criterion) {
    let xs: Vec<f64> = (0..1000).map(|k| -8.0 + 16.0 * k as f64 / 999.0).collect();
    c.bench_function("std_normal_cdf/1000", |b| {
        b.iter(|| xs.iter().map(|&x| std_normal_cdf(black_box(x))).sum::<f64>())
    });
}

fn propagation(c: &mut Criterion) {
    let rs = ratings(100_000, 1);
    c.bench_function("rmse_distribution/1e5", |b| {
        b.iter(|| rmse_distribution(black_box(&rs)).unwrap())
    });
    let small = ratings(100, 2);
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    g.bench_function("rmse/n=100/10^4", |b| {
        b.iter(|| mc_metric_distribution(black_box(&small), Metric::Rmse, 3, 10_000).unwrap())
    });
    g.finish();
}

fn audit(c: &mut Criterion) {
    let entry = &leaderboard(1)[0];
    let model = UncertaintyModel::beta(Scale::five_star(), 2.0, 2.0).unwrap();
    let mut g = c.benchmark_group("attach_variance");
    g.sample_size(10);
    for approach in [Approach::B, Approach::C] {
        let cfg = AuditConfig::new(NETFLIX_TEST_RATINGS, approach, 4);
        g.bench_function(format!("{approach:?}/n=2.8e6"), |b| {
            b.iter_batched(
                || derive_rng(4, 0),
                |mut rng| attach_variance(entry, &cfg, &model, &mut rng).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn ranking(c: &mut Criterion) {
    let sys = systems(12);
    c.bench_function("error_matrix/12", |b| b.iter(|| error_matrix(black_box(&sys)).unwrap()));
}

fn ingestion(c: &mut Criterion) {
    let text = netflix_text(100, 1000);
    c.bench_function("netflix_parse/1e5", |b| {
        b.iter(|| {
            parse_netflix_training(black_box(text.as_bytes()))
                .filter(|r| r.is_ok())
                .count()
        })
    });
}

criterion_group!(benches, phi, propagation, audit, ranking, ingestion);
criterion_main!(benches);
