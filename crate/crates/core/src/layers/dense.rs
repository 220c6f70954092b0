use rand_chacha::ChaCha8Rng;

use super::{check_grad_shape, check_rank, glorot_uniform, LayerError, LayerSpec};
use crate::activations::ActivationKind;
use crate::tensor::{Scalar, Tensor, TensorError};

/// Fully connected layer `activation(x W + b)` with `W: [inputs, units]`.
#[derive(Debug, Clone)]
pub struct Dense<F> {
    pub inputs: usize,
    pub units: usize,
    pub activation: ActivationKind,
    pub weights: Tensor<F>,
    pub biases: Tensor<F>,
    pub grad_weights: Tensor<F>,
    pub grad_biases: Tensor<F>,
    output: bool,
    cache: Option<DenseCache<F>>,
}

#[derive(Debug, Clone)]
struct DenseCache<F> {
    input: Tensor<F>,
    slopes: Vec<F>,
}

impl<F: Scalar> Dense<F> {
    pub(super) fn init(inputs: usize, units: usize, activation: ActivationKind, rng: &mut ChaCha8Rng) -> Self {
        let weights = glorot_uniform(&[inputs, units], inputs, units, rng);
        Self::from_params(weights, Tensor::zeros(&[units]).expect("units >= 1"), activation)
            .expect("shapes built above are consistent")
    }

    /// Wraps explicit weights `[inputs, units]` and biases `[units]`.
    pub fn from_params(weights: Tensor<F>, biases: Tensor<F>, activation: ActivationKind) -> Result<Self, LayerError> {
        let &[inputs, units] = weights.shape() else {
            return Err(TensorError::Shape(format!("dense weights must be rank 2, got {:?}", weights.shape())).into());
        };
        if biases.shape() != [units] {
            return Err(TensorError::Shape(format!("dense biases must be [{units}], got {:?}", biases.shape())).into());
        }
        Ok(Self {
            inputs,
            units,
            activation,
            grad_weights: Tensor::zeros(weights.shape())?,
            grad_biases: Tensor::zeros(biases.shape())?,
            weights,
            biases,
            output: false,
            cache: None,
        })
    }

    /// Marks this layer as the logits layer of a softmax classifier.
    pub(super) fn into_output(mut self) -> Self {
        self.output = true;
        self.activation = ActivationKind::Identity;
        self
    }

    pub fn is_output(&self) -> bool {
        self.output
    }

    pub fn spec(&self) -> LayerSpec {
        if self.output {
            LayerSpec::SoftmaxOutput { classes: self.units }
        } else {
            LayerSpec::Dense { units: self.units, activation: self.activation }
        }
    }

    fn affine(&self, input: &Tensor<F>) -> Result<Vec<F>, LayerError> {
        check_rank(input, 2, "dense")?;
        let batch = input.shape()[0];
        if input.shape()[1] != self.inputs {
            return Err(
                TensorError::Shape(format!("dense expects {} inputs, got {:?}", self.inputs, input.shape())).into()
            );
        }
        let n = self.units;
        let mut out = vec![F::zero(); batch * n];
        F::gemm(
            batch,
            self.inputs,
            n,
            F::one(),
            input.data(),
            (self.inputs as isize, 1),
            self.weights.data(),
            (n as isize, 1),
            F::zero(),
            &mut out,
            (n as isize, 1),
        );
        for row in out.chunks_exact_mut(n) {
            for (o, &b) in row.iter_mut().zip(self.biases.data()) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let mut out = self.affine(input)?;
        self.activation.apply(&mut out);
        Ok(Tensor::from_vec(&[input.shape()[0], self.units], out)?)
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let mut out = self.affine(input)?;
        let slopes = if self.activation == ActivationKind::Identity {
            Vec::new()
        } else {
            let mut slopes = vec![F::zero(); out.len()];
            self.activation.apply_with_d1(&mut out, &mut slopes);
            slopes
        };
        self.cache = Some(DenseCache { input: input.clone(), slopes });
        Ok(Tensor::from_vec(&[input.shape()[0], self.units], out)?)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        self.backward_inner(grad_out, true).map(|g| g.expect("requested"))
    }

    pub(super) fn backward_inner(
        &mut self,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<F>>, LayerError> {
        let cache = self.cache.take().ok_or(LayerError::MissingCache("dense"))?;
        let batch = cache.input.shape()[0];
        let (k, n) = (self.inputs, self.units);
        check_grad_shape(grad_out, &[batch, n], "dense")?;
        let mut dz = grad_out.data().to_vec();
        if !cache.slopes.is_empty() {
            for (d, &s) in dz.iter_mut().zip(&cache.slopes) {
                *d *= s;
            }
        }
        // dW = x^T dz
        F::gemm(
            k,
            batch,
            n,
            F::one(),
            cache.input.data(),
            (1, k as isize),
            &dz,
            (n as isize, 1),
            F::zero(),
            self.grad_weights.data_mut(),
            (n as isize, 1),
        );
        let db = self.grad_biases.data_mut();
        db.iter_mut().for_each(|v| *v = F::zero());
        for row in dz.chunks_exact(n) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        // dx = dz W^T
        let mut dx = vec![F::zero(); batch * k];
        F::gemm(
            batch,
            n,
            k,
            F::one(),
            &dz,
            (n as isize, 1),
            self.weights.data(),
            (1, n as isize),
            F::zero(),
            &mut dx,
            (k as isize, 1),
        );
        Ok(Some(Tensor::from_vec(&[batch, k], dx)?))
    }
}
