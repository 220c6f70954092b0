use rand_chacha::ChaCha8Rng;

use super::{check_grad_shape, check_rank, glorot_uniform, LayerError, LayerSpec};
use crate::activations::ActivationKind;
use crate::tensor::{Scalar, Tensor, TensorError};

/// Valid-padding, stride-1 2D cross-correlation followed by an activation.
///
/// Weights are `[kh, kw, c_in, filters]`; the forward pass unrolls input
/// patches into a `[batch * oh * ow, kh * kw * c_in]` matrix and multiplies
/// it by the weights viewed as `[kh * kw * c_in, filters]`.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    pub filters: usize,
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub activation: ActivationKind,
    pub weights: Tensor<F>,
    pub biases: Tensor<F>,
    pub grad_weights: Tensor<F>,
    pub grad_biases: Tensor<F>,
    cache: Option<ConvCache<F>>,
}

#[derive(Debug, Clone)]
struct ConvCache<F> {
    input_shape: [usize; 4],
    cols: Vec<F>,
    /// Activation slope at each pre-activation; empty for identity.
    slopes: Vec<F>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    batch: usize,
    height: usize,
    width: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.channels
    }

    fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }
}

impl<F: Scalar> Conv2d<F> {
    pub(super) fn init(
        filters: usize,
        kernel: (usize, usize),
        in_channels: usize,
        activation: ActivationKind,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (kh, kw) = kernel;
        let shape = [kh, kw, in_channels, filters];
        let weights = glorot_uniform(&shape, kh * kw * in_channels, kh * kw * filters, rng);
        Self::from_params(weights, Tensor::zeros(&[filters]).expect("filters >= 1"), activation)
            .expect("shapes built above are consistent")
    }

    /// Wraps explicit weights `[kh, kw, c_in, filters]` and biases `[filters]`.
    pub fn from_params(weights: Tensor<F>, biases: Tensor<F>, activation: ActivationKind) -> Result<Self, LayerError> {
        let &[kh, kw, in_channels, filters] = weights.shape() else {
            return Err(TensorError::Shape(format!("conv weights must be rank 4, got {:?}", weights.shape())).into());
        };
        if biases.shape() != [filters] {
            return Err(TensorError::Shape(format!("conv biases must be [{filters}], got {:?}", biases.shape())).into());
        }
        Ok(Self {
            filters,
            kernel: (kh, kw),
            in_channels,
            activation,
            grad_weights: Tensor::zeros(weights.shape())?,
            grad_biases: Tensor::zeros(biases.shape())?,
            weights,
            biases,
            cache: None,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv2d { filters: self.filters, kernel: self.kernel, activation: self.activation }
    }

    fn geometry(&self, input: &Tensor<F>) -> Result<Geometry, LayerError> {
        check_rank(input, 4, "conv2d")?;
        let s = input.shape();
        let (kh, kw) = self.kernel;
        if s[3] != self.in_channels {
            return Err(TensorError::Shape(format!(
                "conv2d expects {} input channels, got {}",
                self.in_channels, s[3]
            ))
            .into());
        }
        if s[1] < kh || s[2] < kw {
            return Err(TensorError::Shape(format!("kernel {kh}x{kw} larger than input {}x{}", s[1], s[2])).into());
        }
        Ok(Geometry {
            batch: s[0],
            height: s[1],
            width: s[2],
            channels: s[3],
            out_h: s[1] - kh + 1,
            out_w: s[2] - kw + 1,
            kh,
            kw,
        })
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let g = self.geometry(input)?;
        let cols = im2col(input.data(), &g);
        let mut out = self.affine(&cols, &g);
        self.activation.apply(&mut out);
        Ok(Tensor::from_vec(&[g.batch, g.out_h, g.out_w, self.filters], out)?)
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let g = self.geometry(input)?;
        let cols = im2col(input.data(), &g);
        let mut out = self.affine(&cols, &g);
        let slopes = if self.activation == ActivationKind::Identity {
            Vec::new()
        } else {
            let mut slopes = vec![F::zero(); out.len()];
            self.activation.apply_with_d1(&mut out, &mut slopes);
            slopes
        };
        self.cache = Some(ConvCache { input_shape: [g.batch, g.height, g.width, g.channels], cols, slopes });
        Ok(Tensor::from_vec(&[g.batch, g.out_h, g.out_w, self.filters], out)?)
    }

    fn affine(&self, cols: &[F], g: &Geometry) -> Vec<F> {
        let (rows, k, n) = (g.rows(), g.patch_len(), self.filters);
        let mut out = vec![F::zero(); rows * n];
        F::gemm(
            rows,
            k,
            n,
            F::one(),
            cols,
            (k as isize, 1),
            self.weights.data(),
            (n as isize, 1),
            F::zero(),
            &mut out,
            (n as isize, 1),
        );
        let bias = self.biases.data();
        for row in out.chunks_exact_mut(n) {
            for (o, &b) in row.iter_mut().zip(bias) {
                *o += b;
            }
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        self.backward_inner(grad_out, true).map(|g| g.expect("requested"))
    }

    pub(super) fn backward_inner(
        &mut self,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<F>>, LayerError> {
        let cache = self.cache.take().ok_or(LayerError::MissingCache("conv2d"))?;
        let [batch, height, width, channels] = cache.input_shape;
        let (kh, kw) = self.kernel;
        let g = Geometry { batch, height, width, channels, out_h: height - kh + 1, out_w: width - kw + 1, kh, kw };
        check_grad_shape(grad_out, &[batch, g.out_h, g.out_w, self.filters], "conv2d")?;

        let mut dz = grad_out.data().to_vec();
        if !cache.slopes.is_empty() {
            for (d, &s) in dz.iter_mut().zip(&cache.slopes) {
                *d *= s;
            }
        }

        let (rows, k, n) = (g.rows(), g.patch_len(), self.filters);
        // dW = cols^T * dz
        F::gemm(
            k,
            rows,
            n,
            F::one(),
            &cache.cols,
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
        // dcols = dz * W^T
        let mut dcols = vec![F::zero(); rows * k];
        F::gemm(
            rows,
            n,
            k,
            F::one(),
            &dz,
            (n as isize, 1),
            self.weights.data(),
            (1, n as isize),
            F::zero(),
            &mut dcols,
            (k as isize, 1),
        );
        let grad_in = col2im(&dcols, &g);
        Ok(Some(Tensor::from_vec(&cache.input_shape, grad_in)?))
    }
}

/// Unrolls every `kh x kw x c` patch into one row, ordered (ky, kx, c).
fn im2col<F: Scalar>(input: &[F], g: &Geometry) -> Vec<F> {
    let k = g.patch_len();
    let run = g.kw * g.channels;
    let mut cols = vec![F::zero(); g.rows() * k];
    let mut rows = cols.chunks_exact_mut(k);
    for b in 0..g.batch {
        let image = &input[b * g.height * g.width * g.channels..];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = rows.next().expect("row count matches geometry");
                for ky in 0..g.kh {
                    let src = ((oy + ky) * g.width + ox) * g.channels;
                    row[ky * run..(ky + 1) * run].copy_from_slice(&image[src..src + run]);
                }
            }
        }
    }
    cols
}

/// Scatter-adds patch gradients back onto the input grid.
fn col2im<F: Scalar>(dcols: &[F], g: &Geometry) -> Vec<F> {
    let k = g.patch_len();
    let run = g.kw * g.channels;
    let image_len = g.height * g.width * g.channels;
    let mut out = vec![F::zero(); g.batch * image_len];
    let mut rows = dcols.chunks_exact(k);
    for b in 0..g.batch {
        let image = &mut out[b * image_len..(b + 1) * image_len];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = rows.next().expect("row count matches geometry");
                for ky in 0..g.kh {
                    let dst = ((oy + ky) * g.width + ox) * g.channels;
                    for (acc, &v) in image[dst..dst + run].iter_mut().zip(&row[ky * run..(ky + 1) * run]) {
                        *acc += v;
                    }
                }
            }
        }
    }
    out
}
