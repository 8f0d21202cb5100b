use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use snr_core::metrics::{analyze_network, empirical_snr, MetricConfig};
use snr_core::nn::Architecture;
use snr_core::{Execution, Matrix, SeededRng};

const PATHS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.uniform())
}

fn layer_merits(c: &mut Criterion) {
    let net = Architecture::MnistSmall.build(1);
    let x = batch(2000, 784, 2);
    let mut group = c.benchmark_group("analyze_mnist_small_2000");
    group.sample_size(10);
    for (name, execution) in PATHS {
        let cfg = MetricConfig {
            execution,
            ..MetricConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| analyze_network(&net, &x, cfg).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo_snr(c: &mut Criterion) {
    let net = Architecture::Toy.build(3);
    let x = batch(500, 16, 4);
    let mut group = c.benchmark_group("empirical_snr_toy_1000_trials");
    group.sample_size(10);
    for (name, execution) in PATHS {
        group.bench_function(name, |b| {
            b.iter(|| empirical_snr(&net, 2, &x, 0.1, 1000, 5, execution).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, layer_merits, monte_carlo_snr);
criterion_main!(benches);
