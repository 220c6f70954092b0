use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activations::ActivationKind;
use crate::layers::{Layer, LayerError, LayerSpec, ParamGrad};
use crate::tensor::{Scalar, Tensor};

/// MNIST sample shape `[rows, cols, channels]`.
pub const INPUT_SHAPE: [usize; 3] = [28, 28, 1];

/// RNG stream reserved for weight initialization; shuffles use the epoch
/// index as their stream.
const INIT_STREAM: u64 = 1 << 40;

/// The benchmark CNN:
/// conv 32@3x3, pool 2x2, conv 64@3x3, pool 2x2, flatten, dense 128, logits 10.
///
/// `activation` goes into both convolutions and, when `sweep_dense` is set,
/// into the 128-unit dense layer (which otherwise keeps ReLU).
pub fn benchmark_architecture(activation: ActivationKind, sweep_dense: bool) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d { filters: 32, kernel: (3, 3), activation },
        LayerSpec::MaxPool2d { window: (2, 2) },
        LayerSpec::Conv2d { filters: 64, kernel: (3, 3), activation },
        LayerSpec::MaxPool2d { window: (2, 2) },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 128, activation: if sweep_dense { activation } else { ActivationKind::ReLU } },
        LayerSpec::SoftmaxOutput { classes: 10 },
    ]
}

/// A stack of layers whose last layer produces class logits.
#[derive(Debug, Clone)]
pub struct Model<F> {
    layers: Vec<Layer<F>>,
    input_shape: Vec<usize>,
}

impl<F: Scalar> Model<F> {
    /// Instantiates `specs` for per-sample `input_shape`, with weights drawn
    /// from a single seeded stream in layer order.
    pub fn new(specs: &[LayerSpec], input_shape: &[usize], seed: u64) -> Result<Self, LayerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for &spec in specs {
            layers.push(Layer::init(spec, &shape, &mut rng)?);
            shape = spec.output_shape(&shape)?;
        }
        Ok(Self { layers, input_shape: input_shape.to_vec() })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape after each layer.
    pub fn shape_chain(&self) -> Vec<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        self.layers
            .iter()
            .map(|l| {
                shape = l.spec().output_shape(&shape).expect("validated at construction");
                shape.clone()
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn param_grads(&mut self) -> Vec<ParamGrad<'_, F>> {
        self.layers.iter_mut().flat_map(Layer::param_grads).collect()
    }

    /// Inference forward pass; returns logits.
    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let mut x = self.layers[0].forward(input)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Training forward pass; every layer caches what backward needs.
    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let (first, rest) = self.layers.split_first_mut().expect("model has layers");
        let mut x = first.forward_train(input)?;
        for layer in rest {
            x = layer.forward_train(&x)?;
        }
        Ok(x)
    }

    /// Backpropagates the logits gradient through every layer, filling
    /// parameter gradients. The input gradient of the first layer is skipped.
    pub fn backward(&mut self, grad_logits: &Tensor<F>) -> Result<(), LayerError> {
        let mut grad = grad_logits.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward_inner(&grad, i > 0)? {
                Some(g) => grad = g,
                None => break,
            }
        }
        Ok(())
    }

    /// Like [`backward`](Self::backward) but also returns the gradient with
    /// respect to the model input.
    pub fn backward_to_input(&mut self, grad_logits: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let mut grad = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad)?;
        }
        Ok(grad)
    }
}

/// The benchmark CNN for 28x28x1 inputs, seeded deterministically.
pub fn build_model<F: Scalar>(activation: ActivationKind, sweep_dense: bool, seed: u64) -> Model<F> {
    Model::new(&benchmark_architecture(activation, sweep_dense), &INPUT_SHAPE, seed)
        .expect("the benchmark architecture fits 28x28 inputs")
}
