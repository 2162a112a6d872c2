//! Seeded fixtures shared by the criterion benchmarks.

use hls_core::{Dataset, LayerCombo, MlpConfig, Targets, Task, TrainingSettings};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random regression data with a noisy linear target, `n` rows by `d` features.
pub fn regression_data(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    let y = x
        .rows()
        .into_iter()
        .map(|r| r.sum() + rng.gen_range(-0.1..0.1))
        .collect();
    Dataset::new(x, Targets::Real(y), None).expect("consistent shapes")
}

/// Random classification data with labels in `0..n_classes`.
pub fn classification_data(n: usize, d: usize, n_classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(0.0..1.0));
    let labels = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
    Dataset::new(x, Targets::Class { labels, n_classes }, None).expect("consistent shapes")
}

pub fn config(sizes: &[usize], task: Task) -> MlpConfig {
    let combo = LayerCombo::new(sizes.to_vec()).expect("positive widths");
    MlpConfig::new(combo, task, &TrainingSettings::default())
}

/// Rosenbrock's function and its gradient.
pub fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
    g[1] = 200.0 * (b - a * a);
    (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
}
