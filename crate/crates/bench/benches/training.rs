use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hls_bench::{classification_data, config, regression_data, rosenbrock};
use hls_core::lbfgs::{minimize, LbfgsConfig};
use hls_core::mlp::{init_params, loss_and_gradient};
use hls_core::search::combinations;
use hls_core::Task;

fn gradients(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss_and_gradient");
    let boston_like = regression_data(404, 13, 1);
    for sizes in [&[10][..], &[10, 10, 10]] {
        let cfg = config(sizes, Task::Regression);
        let flat = init_params(&cfg, 13, 1, 0).flatten();
        group.bench_with_input(
            BenchmarkId::new("regression", format!("{sizes:?}")),
            &flat,
            |b, flat| {
                b.iter(|| {
                    loss_and_gradient(
                        black_box(flat),
                        &cfg,
                        boston_like.features().view(),
                        boston_like.targets(),
                    )
                    .unwrap()
                })
            },
        );
    }
    let mnist_like = classification_data(1000, 784, 10, 2);
    let cfg = config(&[5, 5], Task::Classification);
    let flat = init_params(&cfg, 784, 10, 0).flatten();
    group.bench_function("classification/[5, 5]", |b| {
        b.iter(|| {
            loss_and_gradient(
                black_box(&flat),
                &cfg,
                mnist_like.features().view(),
                mnist_like.targets(),
            )
            .unwrap()
        })
    });
    group.finish();
}

fn optimizer(c: &mut Criterion) {
    c.bench_function("lbfgs/rosenbrock", |b| {
        b.iter(|| minimize(rosenbrock, black_box(vec![-1.2, 1.0]), &LbfgsConfig::default()).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let data = regression_data(404, 13, 3);
    let cfg = hls_core::MlpConfig {
        max_iter: 50,
        ..config(&[8, 8], Task::Regression)
    };
    c.bench_function("mlp/train_50_iterations", |b| {
        b.iter(|| hls_core::mlp::train(&cfg, black_box(&data)).unwrap())
    });
}

fn search(c: &mut Criterion) {
    let mut group = c.benchmark_group("combinations");
    for n in 1..=3 {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| combinations(1, 10, black_box(n)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradients, optimizer, training, search);
criterion_main!(benches);
