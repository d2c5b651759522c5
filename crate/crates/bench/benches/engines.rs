use chaosbound::{
    build_sampler, contraction_sum_fast, contraction_sum_naive, hermite_expand, ContractionConfig,
    ContractionTable, CovarianceModel, FunctionSpec, QuadratureConfig,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn contractions(c: &mut Criterion) {
    let model = CovarianceModel::fbm_increments(0.7).unwrap();
    let mut g = c.benchmark_group("contraction");
    g.sample_size(10);
    g.bench_function("naive n=32 (3,4,2)", |b| {
        b.iter(|| contraction_sum_naive(&model, black_box(32), 3, 4, 2, false).unwrap())
    });
    for n in [64usize, 256] {
        g.bench_with_input(BenchmarkId::new("fast (3,4,2)", n), &n, |b, &n| {
            b.iter(|| contraction_sum_fast(&model, black_box(n), 3, 4, 2, false).unwrap())
        });
    }
    for n in [256usize, 1024] {
        g.bench_with_input(BenchmarkId::new("table p_max=6", n), &n, |b, &n| {
            b.iter(|| {
                ContractionTable::full(&model, black_box(n), 6, &ContractionConfig::default())
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let model = CovarianceModel::fbm_increments(0.7).unwrap();
    let mut g = c.benchmark_group("sampler");
    g.bench_function("build n=4096", |b| {
        b.iter(|| build_sampler(&model, black_box(4096)).unwrap())
    });
    let s = build_sampler(&model, 4096).unwrap();
    let mut pair = 0u64;
    g.bench_function("pair n=4096", |b| {
        b.iter(|| {
            pair += 1;
            s.sample_pair(7, pair)
        })
    });
    g.finish();
}

fn expansion(c: &mut Criterion) {
    let mut g = c.benchmark_group("expansion");
    g.sample_size(20);
    for spec in ["power:1.5", "indicator:0.7", "exponential:0.5"] {
        let f: FunctionSpec = spec.parse().unwrap();
        g.bench_function(spec, |b| {
            b.iter(|| hermite_expand(&f, 30, &QuadratureConfig::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, contractions, sampler, expansion);
criterion_main!(benches);
