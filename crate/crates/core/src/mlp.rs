//! A ReLU multilayer perceptron trained with L-BFGS.
//!
//! Regression uses a linear output unit and half mean squared error; classification
//! uses a softmax head with mean cross-entropy. Both add the penalty
//! `alpha / (2 n) * Σ W²` over weight matrices (biases are not penalized).
//!
//! Parameters are laid out layer by layer as `W` (row-major `fan_in × fan_out`)
//! followed by `b`; [`NetworkParams::flatten`] and [`NetworkParams::unflatten`]
//! convert between that layout and per-layer arrays.

use crate::datasets::{Dataset, ScalerParams, Targets, Task};
use crate::lbfgs::{self, IterationInfo, LbfgsConfig, LbfgsError, Termination};
use crate::LayerCombo;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MlpError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("targets have zero variance, R² is undefined")]
    ZeroVarianceTargets,
    #[error("model is for {model:?} but data is {data:?}")]
    TaskMismatch { model: Task, data: Task },
    #[error("empty evaluation set")]
    EmptyData,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Optimizer(#[from] LbfgsError),
    #[error("model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Everything about training that is fixed across a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSettings {
    pub l2_alpha: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            l2_alpha: 1e-4,
            max_iter: 500,
            seed: 69,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: LayerCombo,
    pub activation: Activation,
    pub l2_alpha: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub task: Task,
}

impl MlpConfig {
    pub fn new(hidden_layers: LayerCombo, task: Task, settings: &TrainingSettings) -> Self {
        Self {
            hidden_layers,
            activation: Activation::Relu,
            l2_alpha: settings.l2_alpha,
            max_iter: settings.max_iter,
            seed: settings.seed,
            task,
        }
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        if !(self.l2_alpha >= 0.0) {
            return Err(MlpError::InvalidConfig("l2_alpha must be non-negative".into()));
        }
        if self.max_iter == 0 {
            return Err(MlpError::InvalidConfig("max_iter must be positive".into()));
        }
        Ok(())
    }

    /// `[input, hidden..., output]`.
    pub fn layer_sizes(&self, input_dim: usize, output_dim: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.n_layers() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(self.hidden_layers.sizes());
        sizes.push(output_dim);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl NetworkParams {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let (weights, biases) = layer_sizes
            .windows(2)
            .map(|w| (Array2::zeros((w[0], w[1])), Array1::zeros(w[1])))
            .unzip();
        Self { weights, biases }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.weights[0].nrows()];
        sizes.extend(self.weights.iter().map(|w| w.ncols()));
        sizes
    }

    pub fn n_params(layer_sizes: &[usize]) -> usize {
        layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::n_params(&self.layer_sizes()));
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn unflatten(layer_sizes: &[usize], flat: &[f64]) -> Result<Self, MlpError> {
        let views = LayerViews::new(layer_sizes, flat)?;
        Ok(Self {
            weights: views.weights.iter().map(|w| w.to_owned()).collect(),
            biases: views.biases.iter().map(|b| b.to_owned()).collect(),
        })
    }

    pub fn sum_sq_weights(&self) -> f64 {
        self.weights.iter().flat_map(|w| w.iter()).map(|v| v * v).sum()
    }
}

/// Borrowed per-layer views into a flat parameter vector.
struct LayerViews<'a> {
    weights: Vec<ArrayView2<'a, f64>>,
    biases: Vec<ArrayView1<'a, f64>>,
}

impl<'a> LayerViews<'a> {
    fn new(layer_sizes: &[usize], flat: &'a [f64]) -> Result<Self, MlpError> {
        let expected = NetworkParams::n_params(layer_sizes);
        if flat.len() != expected {
            return Err(MlpError::ShapeMismatch {
                expected,
                actual: flat.len(),
            });
        }
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        let mut rest = flat;
        for w in layer_sizes.windows(2) {
            let (wpart, tail) = rest.split_at(w[0] * w[1]);
            let (bpart, tail) = tail.split_at(w[1]);
            weights.push(ArrayView2::from_shape((w[0], w[1]), wpart).expect("sized split"));
            biases.push(ArrayView1::from(bpart));
            rest = tail;
        }
        Ok(Self { weights, biases })
    }
}

/// Glorot-uniform weights with bound `sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params(config: &MlpConfig, input_dim: usize, output_dim: usize, seed: u64) -> NetworkParams {
    assert!(input_dim >= 1 && output_dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(&config.layer_sizes(input_dim, output_dim));
    for w in &mut params.weights {
        let bound = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
        w.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
    }
    params
}

fn affine(input: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut z = Array2::zeros((input.nrows(), w.ncols()));
    z.rows_mut().into_iter().for_each(|mut r| r.assign(&b));
    general_mat_mul(1.0, &input, &w, 1.0, &mut z);
    z
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Hidden activations (post-ReLU) and the raw output of the last layer.
fn forward_pass(views: &LayerViews, features: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
    let n_layers = views.weights.len();
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
    for l in 0..n_layers - 1 {
        let input = if l == 0 { features.view() } else { hidden[l - 1].view() };
        let mut z = affine(input, views.weights[l], views.biases[l]);
        z.mapv_inplace(|v| v.max(0.0));
        hidden.push(z);
    }
    let input = if n_layers == 1 {
        features.view()
    } else {
        hidden[n_layers - 2].view()
    };
    let out = affine(input, views.weights[n_layers - 1], views.biases[n_layers - 1]);
    (hidden, out)
}

/// Network outputs: one column for regression, class probabilities otherwise.
pub fn forward(params: &NetworkParams, features: ArrayView2<f64>, task: Task) -> Result<Array2<f64>, MlpError> {
    let sizes = params.layer_sizes();
    if features.ncols() != sizes[0] {
        return Err(MlpError::ShapeMismatch {
            expected: sizes[0],
            actual: features.ncols(),
        });
    }
    let flat = params.flatten();
    let views = LayerViews::new(&sizes, &flat)?;
    let (_, mut out) = forward_pass(&views, features);
    if task == Task::Classification {
        softmax_rows(&mut out);
    }
    Ok(out)
}

/// Training objective over a fixed (already standardized) design matrix.
pub struct Objective<'a> {
    layer_sizes: Vec<usize>,
    features: ArrayView2<'a, f64>,
    /// `n × 1` reals or `n × C` one-hot rows.
    targets: Array2<f64>,
    l2_alpha: f64,
    task: Task,
}

impl<'a> Objective<'a> {
    pub fn new(config: &MlpConfig, features: ArrayView2<'a, f64>, targets: &Targets) -> Result<Self, MlpError> {
        if targets.task() != config.task {
            return Err(MlpError::TaskMismatch {
                model: config.task,
                data: targets.task(),
            });
        }
        if features.nrows() != targets.len() {
            return Err(MlpError::ShapeMismatch {
                expected: features.nrows(),
                actual: targets.len(),
            });
        }
        if features.nrows() == 0 {
            return Err(MlpError::EmptyData);
        }
        let encoded = match targets {
            Targets::Real(y) => Array2::from_shape_vec((y.len(), 1), y.clone()).expect("column"),
            Targets::Class { labels, n_classes } => {
                let mut m = Array2::zeros((labels.len(), *n_classes));
                for (i, &l) in labels.iter().enumerate() {
                    m[[i, l]] = 1.0;
                }
                m
            }
        };
        Ok(Self {
            layer_sizes: config.layer_sizes(features.ncols(), encoded.ncols()),
            features,
            targets: encoded,
            l2_alpha: config.l2_alpha,
            task: config.task,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_params(&self) -> usize {
        NetworkParams::n_params(&self.layer_sizes)
    }

    /// Writes the gradient into `grad` and returns the loss. Lengths must equal
    /// [`Objective::n_params`].
    pub fn eval(&self, flat: &[f64], grad: &mut [f64]) -> f64 {
        let views = LayerViews::new(&self.layer_sizes, flat).expect("parameter length checked by caller");
        assert_eq!(grad.len(), flat.len());
        let n = self.features.nrows() as f64;
        let (hidden, mut out) = forward_pass(&views, self.features);

        let data_loss = match self.task {
            Task::Regression => {
                let mut sq = 0.0;
                Zip::from(&mut out).and(&self.targets).for_each(|o, &t| {
                    let r = *o - t;
                    sq += r * r;
                    *o = r / n;
                });
                sq / (2.0 * n)
            }
            Task::Classification => {
                let mut ce = 0.0;
                for (mut row, t) in out.rows_mut().into_iter().zip(self.targets.rows()) {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                    ce += lse - row.dot(&t);
                    Zip::from(&mut row).and(&t).for_each(|o, &ti| {
                        *o = ((*o - lse).exp() - ti) / n;
                    });
                }
                ce / n
            }
        };
        let sum_sq: f64 = views.weights.iter().flat_map(|w| w.iter()).map(|v| v * v).sum();
        let loss = data_loss + self.l2_alpha / (2.0 * n) * sum_sq;

        // `out` now holds dLoss/dOutput
        let mut delta = out;
        let mut offsets = Vec::with_capacity(self.layer_sizes.len());
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        for l in (0..views.weights.len()).rev() {
            let (fan_in, fan_out) = views.weights[l].dim();
            let input = if l == 0 {
                self.features.view()
            } else {
                hidden[l - 1].view()
            };
            let slot = &mut grad[offsets[l]..offsets[l] + (fan_in + 1) * fan_out];
            let (gw, gb) = slot.split_at_mut(fan_in * fan_out);
            let mut gw = ArrayViewMut2::from_shape((fan_in, fan_out), gw).expect("sized slot");
            gw.assign(&views.weights[l]);
            general_mat_mul(1.0, &input.t(), &delta, self.l2_alpha / n, &mut gw);
            ArrayViewMut1::from(gb).assign(&delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut next = delta.dot(&views.weights[l].t());
                Zip::from(&mut next).and(&hidden[l - 1]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
        }
        loss
    }
}

/// Loss and gradient at `flat_params` on `features` (used as given, no scaling).
pub fn loss_and_gradient(
    flat_params: &[f64],
    config: &MlpConfig,
    features: ArrayView2<f64>,
    targets: &Targets,
) -> Result<(f64, Vec<f64>), MlpError> {
    let objective = Objective::new(config, features, targets)?;
    if flat_params.len() != objective.n_params() {
        return Err(MlpError::ShapeMismatch {
            expected: objective.n_params(),
            actual: flat_params.len(),
        });
    }
    let mut grad = vec![0.0; flat_params.len()];
    let loss = objective.eval(flat_params, &mut grad);
    if !loss.is_finite() {
        return Err(MlpError::NonFiniteLoss);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Real(Vec<f64>),
    Class(Vec<usize>),
}

impl Predictions {
    pub fn as_reals(&self) -> Vec<f64> {
        match self {
            Predictions::Real(v) => v.clone(),
            Predictions::Class(c) => c.iter().map(|&l| l as f64).collect(),
        }
    }
}

/// A fitted standardize-then-MLP pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: MlpConfig,
    pub params: NetworkParams,
    /// Fitted on the training rows; applied to every input of [`TrainedModel::predict`].
    pub scaler: ScalerParams,
    pub final_loss: f64,
    pub n_iterations_used: usize,
    pub termination: Termination,
}

pub fn train(config: &MlpConfig, data: &Dataset) -> Result<TrainedModel, MlpError> {
    train_observed(config, data, |_| {})
}

/// [`train`], forwarding every accepted optimizer step to `observer`.
pub fn train_observed<O: FnMut(&IterationInfo)>(
    config: &MlpConfig,
    data: &Dataset,
    observer: O,
) -> Result<TrainedModel, MlpError> {
    config.validate()?;
    if data.task() != config.task {
        return Err(MlpError::TaskMismatch {
            model: config.task,
            data: data.task(),
        });
    }
    if data.n_samples() == 0 {
        return Err(MlpError::EmptyData);
    }
    let scaler = ScalerParams::fit(data.features().view());
    let scaled = scaler.apply(data.features().view());
    let objective = Objective::new(config, scaled.view(), data.targets())?;
    let sizes = objective.layer_sizes().to_vec();
    let x0 = init_params(config, sizes[0], *sizes.last().unwrap(), config.seed).flatten();
    let lbfgs_config = LbfgsConfig {
        max_iter: config.max_iter,
        ..LbfgsConfig::default()
    };
    let min =
        lbfgs::minimize_observed(|x, g| objective.eval(x, g), x0, &lbfgs_config, observer).map_err(|e| match e {
            LbfgsError::NonFiniteAtStart => MlpError::NonFiniteLoss,
            other => MlpError::Optimizer(other),
        })?;
    if !min.loss.is_finite() {
        return Err(MlpError::NonFiniteLoss);
    }
    Ok(TrainedModel {
        config: config.clone(),
        params: NetworkParams::unflatten(&sizes, &min.x)?,
        scaler,
        final_loss: min.loss,
        n_iterations_used: min.iterations,
        termination: min.termination,
    })
}

const MODEL_FORMAT: &str = "hls-mlp";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    config: MlpConfig,
    layer_sizes: Vec<usize>,
    parameters: Vec<f64>,
    scaler: ScalerParams,
    final_loss: f64,
    n_iterations_used: usize,
    termination: Termination,
}

impl TrainedModel {
    /// Raw outputs (regression column or class probabilities) for unscaled inputs.
    pub fn outputs(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, MlpError> {
        if features.ncols() != self.scaler.n_features() {
            return Err(MlpError::ShapeMismatch {
                expected: self.scaler.n_features(),
                actual: features.ncols(),
            });
        }
        let scaled = self.scaler.apply(features);
        forward(&self.params, scaled.view(), self.config.task)
    }

    /// Regression values, or the most probable class (lowest index on ties).
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Predictions, MlpError> {
        let out = self.outputs(features)?;
        Ok(match self.config.task {
            Task::Regression => Predictions::Real(out.column(0).to_vec()),
            Task::Classification => Predictions::Class(out.rows().into_iter().map(argmax).collect()),
        })
    }

    /// R² for regression, accuracy for classification.
    pub fn score(&self, data: &Dataset) -> Result<f64, MlpError> {
        let pred = self.checked_predict(data)?;
        match (data.targets(), pred) {
            (Targets::Real(y), Predictions::Real(p)) => r2_score(y, &p),
            (Targets::Class { labels, .. }, Predictions::Class(p)) => Ok(accuracy(labels, &p)),
            _ => unreachable!("task checked"),
        }
    }

    /// RMSE of values, or of integer class labels for classifiers.
    pub fn rmse(&self, data: &Dataset) -> Result<f64, MlpError> {
        let pred = self.checked_predict(data)?;
        Ok(rmse(&data.targets().as_reals(), &pred.as_reals()))
    }

    fn checked_predict(&self, data: &Dataset) -> Result<Predictions, MlpError> {
        if data.task() != self.config.task {
            return Err(MlpError::TaskMismatch {
                model: self.config.task,
                data: data.task(),
            });
        }
        if data.n_samples() == 0 {
            return Err(MlpError::EmptyData);
        }
        self.predict(data.features().view())
    }

    pub fn to_json(&self) -> Result<String, MlpError> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            layer_sizes: self.params.layer_sizes(),
            parameters: self.params.flatten(),
            scaler: self.scaler.clone(),
            final_loss: self.final_loss,
            n_iterations_used: self.n_iterations_used,
            termination: self.termination,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, MlpError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(MlpError::UnsupportedVersion(doc.version));
        }
        Ok(Self {
            params: NetworkParams::unflatten(&doc.layer_sizes, &doc.parameters)?,
            config: doc.config,
            scaler: doc.scaler,
            final_loss: doc.final_loss,
            n_iterations_used: doc.n_iterations_used,
            termination: doc.termination,
        })
    }
}

fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn r2_score(y: &[f64], pred: &[f64]) -> Result<f64, MlpError> {
    if y.is_empty() {
        return Err(MlpError::EmptyData);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MlpError::ZeroVarianceTargets);
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn accuracy(labels: &[usize], pred: &[usize]) -> f64 {
    let hits = labels.iter().zip(pred).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

pub fn rmse(y: &[f64], pred: &[f64]) -> f64 {
    let ms = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    ms.sqrt()
}
