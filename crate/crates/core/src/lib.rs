//! A small convolutional network framework built around the SoftReMish
//! activation, `f(x) = x * tanh(ln(1 + exp(alpha * x)))`.
//!
//! The crate is deliberately self-contained: forward and backward passes are
//! written by hand for every layer, activations come with closed-form first
//! and second derivatives, and the MNIST IDX reader has no external format
//! dependency beyond gzip.
//!
//! Modules, bottom up:
//!
//! - [`tensor`]: dense row-major arrays and the handful of operations the
//!   layers need.
//! - [`activations`]: ReLU, Tanh, Softplus, Mish and SoftReMish with
//!   numerically stable evaluation and curve sampling.
//! - [`layers`]: Conv2D, MaxPool2D, Flatten, Dense, and softmax
//!   cross-entropy.
//! - [`optim`]: SGD and Adam.
//! - [`data`]: IDX parsing, normalization, batching, synthetic digits.
//! - [`trainer`]: the benchmark CNN, the training loop and evaluation.

pub mod activations;
pub mod data;
pub mod layers;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use activations::{ActivationCurve, ActivationKind, DerivativeOrder};
pub use data::{Dataset, Split};
pub use layers::{Layer, LayerSpec};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::{Precision, Scalar, Tensor};
pub use trainer::{
    build_model, evaluate, train, DataSource, EpochMetrics, Evaluation, Model, TrainConfig, TrainError, TrainReport,
};
