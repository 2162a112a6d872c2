use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Per-column standardization: `(x - mean) / scale`.
///
/// Scales are population standard deviations. Constant columns get scale 1, so they
/// map to all zeros instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ScalerParams {
    /// Fits on every row of `features`. Panics if there are no rows.
    pub fn fit(features: ArrayView2<f64>) -> Self {
        let n = features.nrows();
        assert!(n > 0, "cannot fit a scaler on zero rows");
        let mut means = Vec::with_capacity(features.ncols());
        let mut scales = Vec::with_capacity(features.ncols());
        for col in features.axis_iter(Axis(1)) {
            let mean = col.sum() / n as f64;
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let scale = if lo == hi {
                1.0
            } else {
                let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                var.sqrt()
            };
            means.push(if lo == hi { lo } else { mean });
            scales.push(scale);
        }
        Self { means, scales }
    }

    pub fn identity(n_features: usize) -> Self {
        Self {
            means: vec![0.0; n_features],
            scales: vec![1.0; n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, features: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(features.ncols(), self.n_features(), "scaler width mismatch");
        let mut out = features.to_owned();
        for (mut col, (&m, &s)) in out.axis_iter_mut(Axis(1)).zip(self.means.iter().zip(&self.scales)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}
