//! Layers with hand-written forward and backward passes.
//!
//! Image tensors are `[batch, height, width, channels]`. Every layer has a
//! pure inference path (`forward`, `&self`) and a training path
//! (`forward_train`, `&mut self`) that stores what `backward` needs. Calling
//! `backward` consumes that cache, so a second call without a new forward
//! pass is an ordering error.

mod conv;
mod dense;
mod flatten;
mod loss;
mod pool;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conv::Conv2d;
pub use dense::Dense;
pub use flatten::Flatten;
pub use loss::{softmax, softmax_xent};
pub use pool::MaxPool2d;

use crate::activations::ActivationKind;
use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}: backward called without a preceding training forward pass")]
    MissingCache(&'static str),
    #[error("label {label} at row {row} is outside [0, {classes})")]
    InvalidLabel { row: usize, label: usize, classes: usize },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
}

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        activation: ActivationKind,
    },
    MaxPool2d {
        window: (usize, usize),
    },
    Flatten,
    Dense {
        units: usize,
        activation: ActivationKind,
    },
    /// Affine layer producing logits; softmax is applied by the loss.
    SoftmaxOutput {
        classes: usize,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), LayerError> {
        let bad = |what: &str| Err(LayerError::InvalidSpec(format!("{what} must be at least 1")));
        match *self {
            LayerSpec::Conv2d { filters, kernel: (kh, kw), .. } => {
                if filters == 0 {
                    return bad("filters");
                }
                if kh == 0 || kw == 0 {
                    return bad("kernel extents");
                }
            }
            LayerSpec::MaxPool2d { window: (ph, pw) } => {
                if ph == 0 || pw == 0 {
                    return bad("window extents");
                }
            }
            LayerSpec::Flatten => {}
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return bad("units");
                }
            }
            LayerSpec::SoftmaxOutput { classes } => {
                if classes == 0 {
                    return bad("classes");
                }
            }
        }
        Ok(())
    }

    /// The activation this layer applies, `None` for parameter-free layers.
    /// The output layer reports `None`; its softmax is part of the loss.
    pub fn activation(&self) -> Option<ActivationKind> {
        match *self {
            LayerSpec::Conv2d { activation, .. } | LayerSpec::Dense { activation, .. } => Some(activation),
            _ => None,
        }
    }

    /// Output shape for one sample (everything but the batch axis).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        self.validate()?;
        let shape_err = |msg: String| LayerError::Tensor(TensorError::Shape(msg));
        match *self {
            LayerSpec::Conv2d { filters, kernel: (kh, kw), .. } => match *input {
                [h, w, _] if h >= kh && w >= kw => Ok(vec![h - kh + 1, w - kw + 1, filters]),
                [h, w, _] => Err(shape_err(format!("kernel {kh}x{kw} larger than input {h}x{w}"))),
                _ => Err(shape_err(format!("conv expects [h, w, c] samples, got {input:?}"))),
            },
            LayerSpec::MaxPool2d { window: (ph, pw) } => match *input {
                [h, w, c] if h >= ph && w >= pw => Ok(vec![h / ph, w / pw, c]),
                [h, w, _] => Err(shape_err(format!("window {ph}x{pw} larger than input {h}x{w}"))),
                _ => Err(shape_err(format!("pooling expects [h, w, c] samples, got {input:?}"))),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units, .. } => match *input {
                [_] => Ok(vec![units]),
                _ => Err(shape_err(format!("dense expects flat samples, got {input:?}"))),
            },
            LayerSpec::SoftmaxOutput { classes } => match *input {
                [_] => Ok(vec![classes]),
                _ => Err(shape_err(format!("output layer expects flat samples, got {input:?}"))),
            },
        }
    }
}

/// A trainable parameter tensor paired with its most recent gradient.
pub struct ParamGrad<'a, F> {
    pub param: &'a mut Tensor<F>,
    pub grad: &'a Tensor<F>,
}

/// An instantiated layer: parameters, gradients and the forward cache.
#[derive(Debug, Clone)]
pub enum Layer<F> {
    Conv2d(Conv2d<F>),
    MaxPool2d(MaxPool2d),
    Flatten(Flatten),
    Dense(Dense<F>),
}

impl<F: Scalar> Layer<F> {
    /// Creates the layer for per-sample input shape `input`, drawing
    /// Glorot-uniform weights from `rng`. Biases start at zero.
    pub fn init(spec: LayerSpec, input: &[usize], rng: &mut ChaCha8Rng) -> Result<Self, LayerError> {
        spec.output_shape(input)?;
        Ok(match spec {
            LayerSpec::Conv2d { filters, kernel, activation } => {
                Layer::Conv2d(Conv2d::init(filters, kernel, input[2], activation, rng))
            }
            LayerSpec::MaxPool2d { window } => Layer::MaxPool2d(MaxPool2d::new(window)),
            LayerSpec::Flatten => Layer::Flatten(Flatten::new()),
            LayerSpec::Dense { units, activation } => Layer::Dense(Dense::init(input[0], units, activation, rng)),
            LayerSpec::SoftmaxOutput { classes } => {
                Layer::Dense(Dense::init(input[0], classes, ActivationKind::Identity, rng).into_output())
            }
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(l) => l.spec(),
            Layer::MaxPool2d(l) => l.spec(),
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::Dense(l) => l.spec(),
        }
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        match self {
            Layer::Conv2d(l) => l.forward(input),
            Layer::MaxPool2d(l) => l.forward(input),
            Layer::Flatten(l) => l.forward(input),
            Layer::Dense(l) => l.forward(input),
        }
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        match self {
            Layer::Conv2d(l) => l.forward_train(input),
            Layer::MaxPool2d(l) => l.forward_train(input),
            Layer::Flatten(l) => l.forward_train(input),
            Layer::Dense(l) => l.forward_train(input),
        }
    }

    /// Fills parameter gradients and returns the gradient with respect to the
    /// input.
    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        self.backward_inner(grad_out, true).map(|g| g.expect("input gradient was requested"))
    }

    /// Like [`backward`](Self::backward) but skips the input gradient when
    /// `need_input_grad` is false (the first layer of a network).
    pub fn backward_inner(
        &mut self,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<F>>, LayerError> {
        match self {
            Layer::Conv2d(l) => l.backward_inner(grad_out, need_input_grad),
            Layer::MaxPool2d(l) => l.backward(grad_out).map(Some),
            Layer::Flatten(l) => l.backward(grad_out).map(Some),
            Layer::Dense(l) => l.backward_inner(grad_out, need_input_grad),
        }
    }

    /// Weights then biases, for layers that have them.
    pub fn params(&self) -> Vec<&Tensor<F>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weights, &l.biases],
            Layer::Dense(l) => vec![&l.weights, &l.biases],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weights, &mut l.biases],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.biases],
            _ => Vec::new(),
        }
    }

    pub fn grads(&self) -> Vec<&Tensor<F>> {
        match self {
            Layer::Conv2d(l) => vec![&l.grad_weights, &l.grad_biases],
            Layer::Dense(l) => vec![&l.grad_weights, &l.grad_biases],
            _ => Vec::new(),
        }
    }

    pub fn param_grads(&mut self) -> Vec<ParamGrad<'_, F>> {
        match self {
            Layer::Conv2d(l) => vec![
                ParamGrad { param: &mut l.weights, grad: &l.grad_weights },
                ParamGrad { param: &mut l.biases, grad: &l.grad_biases },
            ],
            Layer::Dense(l) => vec![
                ParamGrad { param: &mut l.weights, grad: &l.grad_weights },
                ParamGrad { param: &mut l.biases, grad: &l.grad_biases },
            ],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Builds a single layer from a seed, see [`Layer::init`].
pub fn init_params<F: Scalar>(spec: LayerSpec, input: &[usize], seed: u64) -> Result<Layer<F>, LayerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Layer::init(spec, input, &mut rng)
}

/// Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot_uniform<F: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor<F> {
    let limit = glorot_limit(fan_in, fan_out);
    let n = shape.iter().product();
    let values = (0..n).map(|_| F::from_f64_lossy(rng.gen_range(-limit..limit))).collect();
    Tensor::from_vec(shape, values).expect("glorot shape is valid")
}

fn check_rank(input: &Tensor<impl Scalar>, rank: usize, layer: &str) -> Result<(), LayerError> {
    if input.rank() != rank {
        return Err(LayerError::Tensor(TensorError::Shape(format!(
            "{layer} expects a rank-{rank} input, got shape {:?}",
            input.shape()
        ))));
    }
    Ok(())
}

fn check_grad_shape(grad: &Tensor<impl Scalar>, expected: &[usize], layer: &str) -> Result<(), LayerError> {
    if grad.shape() != expected {
        return Err(LayerError::Tensor(TensorError::Shape(format!(
            "{layer} upstream gradient has shape {:?}, forward output was {expected:?}",
            grad.shape()
        ))));
    }
    Ok(())
}
