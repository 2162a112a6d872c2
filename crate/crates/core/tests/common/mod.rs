//! Random problem generators and reference computations shared by the test targets.
#![allow(dead_code)]

use hls_core::mlp::{loss_and_gradient, NetworkParams};
use hls_core::{LayerCombo, MlpConfig, Targets, Task, TrainingSettings};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A network with at most three hidden layers of width at most five, on at most
/// twenty samples, with random parameters.
pub fn random_net(rng: &mut ChaCha8Rng, task: Task) -> (MlpConfig, Array2<f64>, Targets, Vec<f64>) {
    let n_layers = rng.gen_range(1..=3);
    let hidden: Vec<usize> = (0..n_layers).map(|_| rng.gen_range(1..=5)).collect();
    let settings = TrainingSettings {
        l2_alpha: rng.gen_range(0.0..0.5),
        ..Default::default()
    };
    let cfg = MlpConfig::new(LayerCombo::new(hidden).unwrap(), task, &settings);
    let n = rng.gen_range(1..=20);
    let d = rng.gen_range(1..=5);
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
    let targets = match task {
        Task::Regression => Targets::Real((0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()),
        Task::Classification => {
            let k = rng.gen_range(2..=4);
            Targets::Class {
                labels: (0..n).map(|_| rng.gen_range(0..k)).collect(),
                n_classes: k,
            }
        }
    };
    let out = match &targets {
        Targets::Real(_) => 1,
        Targets::Class { n_classes, .. } => *n_classes,
    };
    let sizes = cfg.layer_sizes(d, out);
    let flat: Vec<f64> = (0..NetworkParams::n_params(&sizes))
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    (cfg, x, targets, flat)
}

/// Largest `‖g - fd‖₂ / max(‖g‖₂, ‖fd‖₂)` for central differences with step `h`.
pub fn gradient_rel_error(cfg: &MlpConfig, x: &Array2<f64>, t: &Targets, flat: &[f64], h: f64) -> f64 {
    let (_, g) = loss_and_gradient(flat, cfg, x.view(), t).unwrap();
    let mut p = flat.to_vec();
    let fd: Vec<f64> = (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss_and_gradient(&p, cfg, x.view(), t).unwrap().0;
            p[i] = orig - h;
            let down = loss_and_gradient(&p, cfg, x.view(), t).unwrap().0;
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let scale = norm(&g).max(norm(&fd));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// `A = MᵀM + I` with `M` uniform in `[-1, 1]` (eigenvalues at least 1) and the
/// solution `x* = A⁻¹ b` for `b` uniform in `[-5, 5]`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> (Array2<f64>, Vec<f64>) {
    let m = Array2::from_shape_fn((d, d), |_| rng.gen_range(-1.0..1.0));
    let a = m.t().dot(&m) + Array2::<f64>::eye(d);
    let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let x_star = solve(&a, &b);
    (a, x_star)
}

/// `½ (x - x*)ᵀ A (x - x*)`, which equals `½ xᵀAx - bᵀx` up to a constant. Writing
/// it around `x*` keeps loss differences near the optimum above rounding noise,
/// which a line search needs to resolve `1e-8` in `x`.
pub fn quadratic(a: Array2<f64>, x_star: Vec<f64>) -> impl FnMut(&[f64], &mut [f64]) -> f64 {
    move |x, g| {
        let e: Vec<f64> = x.iter().zip(&x_star).map(|(u, v)| u - v).collect();
        let mut f = 0.0;
        for i in 0..e.len() {
            g[i] = (0..e.len()).map(|j| a[[i, j]] * e[j]).sum();
            f += 0.5 * e[i] * g[i];
        }
        f
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let d = b.len();
    let mut m = a.clone();
    let mut r = b.to_vec();
    for c in 0..d {
        let p = (c..d)
            .max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))
            .unwrap();
        for k in 0..d {
            m.swap([c, k], [p, k]);
        }
        r.swap(c, p);
        for i in c + 1..d {
            let f = m[[i, c]] / m[[c, c]];
            for k in c..d {
                m[[i, k]] -= f * m[[c, k]];
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| m[[i, k]] * x[k]).sum();
        x[i] = (r[i] - s) / m[[i, i]];
    }
    x
}
