//! SGD and Adam, applied elementwise over every trainable tensor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layers::ParamGrad;
use crate::tensor::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("non-finite gradient in parameter tensor {tensor} at element {element}")]
    NonFiniteGradient { tensor: usize, element: usize },
    #[error("gradient shape {grad:?} does not match parameter shape {param:?}")]
    ShapeMismatch { param: Vec<usize>, grad: Vec<usize> },
    #[error("parameter set changed between steps: expected {expected} tensors, got {got}")]
    ParamSetChanged { expected: usize, got: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, learning_rate, ..Self::default() }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let err = |m: String| Err(OptimError::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return err(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Optimizer state for one training run.
#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    config: OptimizerConfig,
    step_count: u64,
    first_moments: Vec<Vec<F>>,
    second_moments: Vec<Vec<F>>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(config: OptimizerConfig) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(Self { config, step_count: 0, first_moments: Vec::new(), second_moments: Vec::new() })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Updates every parameter in place from its gradient.
    ///
    /// All gradients are checked before anything is written, so a
    /// non-finite gradient leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut [ParamGrad<'_, F>]) -> Result<(), OptimError> {
        for (tensor, pg) in params.iter().enumerate() {
            if pg.param.shape() != pg.grad.shape() {
                return Err(OptimError::ShapeMismatch {
                    param: pg.param.shape().to_vec(),
                    grad: pg.grad.shape().to_vec(),
                });
            }
            if let Some(element) = pg.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(OptimError::NonFiniteGradient { tensor, element });
            }
        }
        if self.config.kind == OptimizerKind::Adam {
            if self.first_moments.is_empty() {
                self.first_moments = params.iter().map(|p| vec![F::zero(); p.param.len()]).collect();
                self.second_moments = self.first_moments.clone();
            } else if self.first_moments.len() != params.len()
                || self.first_moments.iter().zip(params.iter()).any(|(m, p)| m.len() != p.param.len())
            {
                return Err(OptimError::ParamSetChanged { expected: self.first_moments.len(), got: params.len() });
            }
        }
        self.step_count += 1;
        let lr = F::from_f64_lossy(self.config.learning_rate);
        match self.config.kind {
            OptimizerKind::Sgd => {
                for pg in params.iter_mut() {
                    for (p, &g) in pg.param.data_mut().iter_mut().zip(pg.grad.data()) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step_count as i32;
                let cfg = &self.config;
                let b1 = F::from_f64_lossy(cfg.beta1);
                let b2 = F::from_f64_lossy(cfg.beta2);
                let one_m_b1 = F::from_f64_lossy(1.0 - cfg.beta1);
                let one_m_b2 = F::from_f64_lossy(1.0 - cfg.beta2);
                let bias1 = F::from_f64_lossy(1.0 - cfg.beta1.powi(t));
                let bias2 = F::from_f64_lossy(1.0 - cfg.beta2.powi(t));
                let eps = F::from_f64_lossy(cfg.epsilon);
                for ((pg, m), v) in params.iter_mut().zip(&mut self.first_moments).zip(&mut self.second_moments) {
                    let grads = pg.grad.data();
                    for (((p, &g), m), v) in
                        pg.param.data_mut().iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *m = b1 * *m + one_m_b1 * g;
                        *v = b2 * *v + one_m_b2 * g * g;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
