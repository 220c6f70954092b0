use super::{LayerError, LayerSpec};
use crate::tensor::{Scalar, Tensor, TensorError};

/// `[b, h, w, c] -> [b, h * w * c]`, row-major order preserved.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Flatten
    }

    pub fn forward<F: Scalar>(&self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let batch = input.shape()[0];
        Ok(input.clone().reshape(&[batch, input.len() / batch])?)
    }

    pub fn forward_train<F: Scalar>(&mut self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        self.input_shape = Some(input.shape().to_vec());
        self.forward(input)
    }

    pub fn backward<F: Scalar>(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let shape = self.input_shape.take().ok_or(LayerError::MissingCache("flatten"))?;
        if grad_out.len() != shape.iter().product::<usize>() {
            return Err(TensorError::Shape(format!(
                "flatten gradient {:?} does not match input {shape:?}",
                grad_out.shape()
            ))
            .into());
        }
        Ok(grad_out.clone().reshape(&shape)?)
    }
}
