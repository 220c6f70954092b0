//! Dense row-major tensors.
//!
//! [`Tensor`] is a flat `Vec` plus a shape. There is no broadcasting and no
//! strided view; everything the layers need is expressed through whole-tensor
//! elementwise maps, a rank-2 matrix product, and the raw GEMM entry point on
//! [`Scalar`].

use std::fmt;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Element precision of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Single => f.write_str("single"),
            Precision::Double => f.write_str("double"),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            other => Err(format!("unknown precision `{other}` (expected single or double)")),
        }
    }
}

/// Floating point element type: `f32` for training, `f64` for oracles and
/// gradient checks.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const PRECISION: Precision;

    /// `c = alpha * a * b + beta * c` over strided row/column views.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`. When `beta` is zero `c`
    /// is overwritten without being read.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("every f64 converts to a float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

fn span(rows: usize, cols: usize, strides: (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * strides.0 as usize + (cols - 1) * strides.1 as usize + 1
}

macro_rules! impl_scalar {
    ($ty:ty, $prec:expr, $kernel:path) => {
        impl Scalar for $ty {
            const PRECISION: Precision = $prec;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                assert!(a_strides.0 >= 0 && a_strides.1 >= 0);
                assert!(b_strides.0 >= 0 && b_strides.1 >= 0);
                assert!(c_strides.0 >= 0 && c_strides.1 >= 0);
                assert!(a.len() >= span(m, k, a_strides), "gemm: lhs buffer too short");
                assert!(b.len() >= span(k, n, b_strides), "gemm: rhs buffer too short");
                assert!(c.len() >= span(m, n, c_strides), "gemm: output buffer too short");
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, Precision::Single, matrixmultiply::sgemm);
impl_scalar!(f64, Precision::Double, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
}

/// Elementwise binary operations supported by [`Tensor::zip_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: fmt::Debug> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        let mut d = f.debug_struct("Tensor");
        d.field("shape", &self.shape);
        if self.data.len() <= PREVIEW {
            d.field("data", &self.data);
        } else {
            d.field("data_head", &&self.data[..PREVIEW]);
        }
        d.finish()
    }
}

fn checked_len(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() {
        return Err(TensorError::Shape("shape must have at least one extent".into()));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(TensorError::Shape(format!("extent {pos} of {shape:?} is zero")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| TensorError::Shape(format!("element count of {shape:?} overflows")))
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        let len = checked_len(shape)?;
        Ok(Self { shape: shape.to_vec(), data: vec![F::zero(); len] })
    }

    /// Copies `values` into a new tensor. Values must be finite.
    pub fn from_values(shape: &[usize], values: &[F]) -> Result<Self, TensorError> {
        Self::from_vec(shape, values.to_vec())
    }

    /// Takes ownership of `data` as the row-major contents of `shape`.
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self, TensorError> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(TensorError::Shape(format!(
                "shape {shape:?} holds {len} elements but {} values were given",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(pos));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn precision(&self) -> Precision {
        F::PRECISION
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// Mutable access to the flat buffer. Used by optimizer updates and by
    /// layer kernels that fill freshly allocated outputs.
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    /// Element at a multi-index. Panics when the index is out of range.
    pub fn at(&self, index: &[usize]) -> F {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            assert!(i < extent, "index {index:?} out of range for shape {:?}", self.shape);
            flat = flat * extent + i;
        }
        self.data[flat]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        let len = checked_len(shape)?;
        if len != self.data.len() {
            return Err(TensorError::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, op: BinaryOp) -> Result<Self, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::Shape(format!(
                "elementwise {op:?} needs equal shapes, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let f = match op {
            BinaryOp::Add => |a: F, b: F| a + b,
            BinaryOp::Sub => |a: F, b: F| a - b,
            BinaryOp::Mul => |a: F, b: F| a * b,
        };
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_with(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_with(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_with(other, BinaryOp::Mul)
    }

    /// Rank-2 matrix product `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        let (m, k) = self.as_matrix()?;
        let (k2, n) = other.as_matrix()?;
        if k != k2 {
            return Err(TensorError::Shape(format!(
                "matmul inner extents differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![F::zero(); m * n];
        F::gemm(
            m,
            k,
            n,
            F::one(),
            &self.data,
            (k as isize, 1),
            &other.data,
            (n as isize, 1),
            F::zero(),
            &mut out,
            (n as isize, 1),
        );
        Ok(Self { shape: vec![m, n], data: out })
    }

    /// Row-wise argmax of a `[n, c]` tensor; ties go to the lowest index.
    pub fn argmax_last_axis(&self) -> Result<Vec<usize>, TensorError> {
        let (_, cols) = self.as_matrix()?;
        Ok(self.data.chunks_exact(cols).map(argmax).collect())
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, v| m.max(v.abs()))
    }

    /// Converts every element to another precision.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| G::from_f64_lossy(v.as_f64())).collect() }
    }

    fn as_matrix(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            &[rows, cols] => Ok((rows, cols)),
            other => Err(TensorError::Shape(format!("expected a rank-2 tensor, got shape {other:?}"))),
        }
    }
}

/// Index of the first maximum in `row`.
pub fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, v).unwrap()
    }

    fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.data()[i * k + p] * b.data()[p * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn zeros_have_requested_shape() {
        let t = Tensor::<f64>::zeros(&[2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = Tensor::<f32>::zeros(&[1]).unwrap();
        assert_eq!(t.data(), &[0.0]);
        assert_eq!(t.precision(), Precision::Single);
        let t = Tensor::<f64>::zeros(&[3, 1, 2]).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.shape(), &[3, 1, 2]);
    }

    #[test]
    fn zeros_rejects_degenerate_shapes() {
        assert!(Tensor::<f64>::zeros(&[]).is_err());
        assert!(Tensor::<f64>::zeros(&[2, 0]).is_err());
    }

    #[test]
    fn from_values_is_row_major() {
        let t = Tensor::<f64>::from_values(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.at(&[1, 0]), 3.0);
        let flat = Tensor::<f64>::from_values(&[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(flat.clone().reshape(&[2, 2]).unwrap().data(), flat.data());
        assert!(Tensor::<f64>::from_values(&[2, 3], &[1.0; 5]).is_err());
    }

    #[test]
    fn from_values_rejects_non_finite() {
        assert!(Tensor::<f64>::from_values(&[2], &[1.0, f64::NAN]).is_err());
        assert!(Tensor::<f32>::from_values(&[1], &[f32::INFINITY]).is_err());
    }

    #[test]
    fn map_applies_pointwise() {
        let t = Tensor::<f64>::from_values(&[2], &[-1.0, 2.0]).unwrap();
        assert_eq!(t.map(|v| v.max(0.0)).data(), &[0.0, 2.0]);
        assert_eq!(t.map(|v| v), t);
        let z = Tensor::<f64>::from_values(&[1], &[0.0]).unwrap();
        assert_eq!(z.map(f64::tanh).data(), &[0.0]);
    }

    #[test]
    fn matmul_small_cases() {
        let id = Tensor::<f64>::from_values(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::<f64>::from_values(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(id.matmul(&b).unwrap(), b);

        let a = Tensor::<f64>::from_values(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let ones = Tensor::<f64>::from_values(&[2, 1], &[1.0, 1.0]).unwrap();
        let p = a.matmul(&ones).unwrap();
        assert_eq!(p.shape(), &[2, 1]);
        assert_eq!(p.data(), &[3.0, 7.0]);

        assert!(a.matmul(&b.clone().reshape(&[3, 2]).unwrap()).is_err());
        assert!(ones.reshape(&[2]).unwrap().matmul(&a).is_err());
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random(&[4, 5], &mut rng);
            let b = random(&[5, 3], &mut rng);
            let got = a.matmul(&b).unwrap();
            for (g, w) in got.data().iter().zip(naive_matmul(&a, &b)) {
                assert!((g - w).abs() <= 1e-14, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn matmul_is_associative_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random(&[4, 4], &mut rng);
            let b = random(&[4, 4], &mut rng);
            let c = random(&[4, 4], &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            assert!(left.sub(&right).unwrap().max_abs() <= 1e-10);
        }
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::<f64>::from_values(&[2], &[2.0, 3.0]).unwrap();
        let b = Tensor::<f64>::from_values(&[2], &[4.0, 5.0]).unwrap();
        let z = Tensor::<f64>::zeros(&[2]).unwrap();
        assert_eq!(a.add(&z).unwrap(), a);
        assert_eq!(a.sub(&a).unwrap(), z);
        assert_eq!(a.mul(&b).unwrap().data(), &[8.0, 15.0]);
        let c = Tensor::<f64>::zeros(&[2, 1]).unwrap();
        assert!(a.add(&c).is_err());
    }

    #[test]
    fn argmax_rules() {
        let t = Tensor::<f64>::from_values(&[1, 2], &[0.1, 0.9]).unwrap();
        assert_eq!(t.argmax_last_axis().unwrap(), vec![1]);
        let t = Tensor::<f64>::from_values(&[1, 2], &[0.5, 0.5]).unwrap();
        assert_eq!(t.argmax_last_axis().unwrap(), vec![0]);
        assert!(Tensor::<f64>::zeros(&[3]).unwrap().argmax_last_axis().is_err());
    }

    #[test]
    fn argmax_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random(&[8, 10], &mut rng);
        let got = t.argmax_last_axis().unwrap();
        for (r, &g) in got.iter().enumerate() {
            let row = &t.data()[r * 10..(r + 1) * 10];
            let mut best = 0;
            for c in 0..10 {
                if row[c] > row[best] {
                    best = c;
                }
            }
            assert_eq!(g, best);
        }
    }

    proptest! {
        #[test]
        fn reshape_round_trip_is_exact(values in prop::collection::vec(-1e6f64..1e6, 12)) {
            let t = Tensor::from_values(&[12], &values).unwrap();
            let back = t.reshape(&[3, 4]).unwrap().reshape(&[2, 6]).unwrap().into_vec();
            prop_assert_eq!(back, values);
        }

        #[test]
        fn constant_rows_argmax_to_zero(v in -1e3f64..1e3, cols in 1usize..16) {
            let t = Tensor::from_vec(&[2, cols], vec![v; 2 * cols]).unwrap();
            prop_assert_eq!(t.argmax_last_axis().unwrap(), vec![0, 0]);
        }

        #[test]
        fn elementwise_ops_preserve_shape(a in prop::collection::vec(-10f64..10.0, 6)) {
            let t = Tensor::from_values(&[2, 3], &a).unwrap();
            for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul] {
                let z = t.zip_with(&t, op).unwrap();
                prop_assert_eq!(z.shape(), &[2, 3]);
            }
            let m = t.map(f64::tanh);
            prop_assert_eq!(m.shape(), &[2, 3]);
        }
    }
}
