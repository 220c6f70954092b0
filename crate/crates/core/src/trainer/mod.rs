//! The benchmark CNN, the seeded training loop and evaluation.

mod model;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{benchmark_architecture, build_model, Model, INPUT_SHAPE};

use crate::activations::{ActivationKind, DEFAULT_ALPHA};
use crate::data::{load_mnist, synthetic_dataset, synthetic_range, DataError, Dataset, Split};
use crate::layers::{softmax_xent, LayerError};
use crate::optim::{OptimError, Optimizer, OptimizerConfig};
use crate::tensor::{argmax, Precision, Scalar, TensorError};

/// Forward-only batch size used by [`evaluate`]; affects memory, not results.
const EVAL_BATCH: usize = 250;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Layer(LayerError),
    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Diverged { epoch: usize, batch: usize, reason: String },
}

impl From<LayerError> for TrainError {
    fn from(e: LayerError) -> Self {
        TrainError::Layer(e)
    }
}

/// Where training and validation samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// The four canonical MNIST files; validation is the test split.
    Mnist { dir: PathBuf },
    /// `samples` synthetic digits for training; validation is the next
    /// `max(samples / 5, 10)` samples of the same stream.
    Synthetic { samples: usize, seed: u64 },
}

impl DataSource {
    /// Training and validation sets.
    pub fn load<F: Scalar>(&self) -> Result<(Dataset<F>, Dataset<F>), DataError> {
        match self {
            DataSource::Mnist { dir } => Ok((load_mnist(dir, Split::Train)?, load_mnist(dir, Split::Test)?)),
            DataSource::Synthetic { samples, seed } => {
                if *samples == 0 {
                    return Err(DataError::InvalidConfig("synthetic sample count must be at least 1".into()));
                }
                let val = synthetic_validation_size(*samples);
                Ok((synthetic_dataset(*seed, *samples), synthetic_range(*seed, *samples, val)))
            }
        }
    }
}

/// Size of the held-out slice that follows `samples` synthetic training digits.
pub fn synthetic_validation_size(samples: usize) -> usize {
    (samples / 5).max(10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub activation: ActivationKind,
    /// Use `activation` in the 128-unit dense layer too (otherwise ReLU).
    pub sweep_dense: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub precision: Precision,
    pub data: DataSource,
    /// Kernels always run sequentially; this only forbids concurrent runs
    /// in a sweep.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            activation: ActivationKind::SoftReMish { alpha: DEFAULT_ALPHA },
            sweep_dense: true,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            precision: Precision::Single,
            data: DataSource::Synthetic { samples: 2000, seed: 42 },
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1".into()));
        }
        if let ActivationKind::SoftReMish { alpha } = self.activation {
            ActivationKind::soft_remish(alpha).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        }
        if let DataSource::Synthetic { samples: 0, .. } = self.data {
            return Err(TrainError::InvalidConfig("synthetic sample count must be at least 1".into()));
        }
        self.optimizer.validate().map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the per-batch mean losses.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub param_count: usize,
    pub epochs: Vec<EpochMetrics>,
    pub max_val_accuracy: f64,
    pub min_train_loss: f64,
    pub min_val_loss: f64,
    pub wall_time_secs: f64,
}

impl TrainReport {
    fn new(config: TrainConfig, param_count: usize, epochs: Vec<EpochMetrics>, wall_time_secs: f64) -> Self {
        let fold = |f: fn(&EpochMetrics) -> f64, max: bool| {
            epochs.iter().map(f).fold(if max { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
                if max {
                    a.max(b)
                } else {
                    a.min(b)
                }
            })
        };
        Self {
            max_val_accuracy: fold(|m| m.val_accuracy, true),
            min_train_loss: fold(|m| m.train_loss, false),
            min_val_loss: fold(|m| m.val_loss, false),
            config,
            param_count,
            epochs,
            wall_time_secs,
        }
    }
}

/// Mean loss, accuracy and per-sample predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

/// Forward-only evaluation; the model is not modified.
pub fn evaluate<F: Scalar>(model: &Model<F>, data: &Dataset<F>) -> Result<Evaluation, TrainError> {
    let n = data.len();
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(n);
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, y) = data.gather(chunk);
        let logits = model.forward(&x)?;
        let (loss, _) = softmax_xent(&logits, &y)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch: 0, batch: 0, reason: "non-finite evaluation loss".into() });
        }
        loss_sum += loss * chunk.len() as f64;
        let classes: usize = logits.shape()[1];
        predictions.extend(logits.data().chunks_exact(classes).map(argmax));
    }
    let correct = predictions.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    Ok(Evaluation { loss: loss_sum / n as f64, accuracy: correct as f64 / n as f64, predictions })
}

/// Trains the benchmark CNN on `train_set`, evaluating on `val_set` after every
/// epoch.
pub fn train<F: Scalar>(
    cfg: &TrainConfig,
    train_set: &Dataset<F>,
    val_set: &Dataset<F>,
) -> Result<TrainReport, TrainError> {
    train_with(cfg, train_set, val_set, |_| {})
}

/// [`train`] with a callback invoked after each epoch.
pub fn train_with<F: Scalar>(
    cfg: &TrainConfig,
    train_set: &Dataset<F>,
    val_set: &Dataset<F>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::InvalidConfig("training and validation sets must be non-empty".into()));
    }
    let start = Instant::now();
    let mut model = build_model::<F>(cfg.activation, cfg.sweep_dense, cfg.seed);
    let mut optimizer = Optimizer::<F>::new(cfg.optimizer).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch, (x, y)) in train_set.batches(cfg.batch_size, true, cfg.seed, epoch as u64 - 1)?.enumerate() {
            let diverged = |reason: String| TrainError::Diverged { epoch, batch, reason };
            let logits = model.forward_train(&x).map_err(|e| layer_failure(e, &diverged))?;
            let (loss, grad) = softmax_xent(&logits, &y).map_err(|e| layer_failure(e, &diverged))?;
            if !loss.is_finite() {
                return Err(diverged(format!("loss is {loss}")));
            }
            model.backward(&grad).map_err(|e| layer_failure(e, &diverged))?;
            optimizer.step(&mut model.param_grads()).map_err(|e| match e {
                OptimError::NonFiniteGradient { .. } => diverged(e.to_string()),
                other => TrainError::InvalidConfig(other.to_string()),
            })?;
            loss_sum += loss;
            batches += 1;
        }
        let eval = evaluate(&model, val_set).map_err(|e| match e {
            TrainError::Diverged { reason, .. } => TrainError::Diverged { epoch, batch: batches, reason },
            other => other,
        })?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
        };
        on_epoch(&metrics);
        history.push(metrics);
    }
    let wall = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    Ok(TrainReport::new(cfg.clone(), model.param_count(), history, wall))
}

/// Non-finite tensors mean divergence; anything else is a genuine layer error.
fn layer_failure(e: LayerError, diverged: &impl Fn(String) -> TrainError) -> TrainError {
    match e {
        LayerError::Tensor(TensorError::NonFinite(pos)) => diverged(format!("non-finite value at flat index {pos}")),
        other => TrainError::Layer(other),
    }
}

/// Loads the configured data and trains at the configured precision.
pub fn run(cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    run_with(cfg, |_| {})
}

/// [`run`] with a per-epoch callback.
pub fn run_with(cfg: &TrainConfig, on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    match cfg.precision {
        Precision::Single => {
            let (tr, va) = cfg.data.load::<f32>()?;
            train_with(cfg, &tr, &va, on_epoch)
        }
        Precision::Double => {
            let (tr, va) = cfg.data.load::<f64>()?;
            train_with(cfg, &tr, &va, on_epoch)
        }
    }
}
