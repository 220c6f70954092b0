//! MNIST loading, normalization and batching.

pub mod idx;
mod synthetic;

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use idx::{parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels, IdxHeader, RawImages};
pub use synthetic::{synthetic_dataset, synthetic_range, synthetic_raw};

use crate::tensor::{Scalar, Tensor};

pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("format error: {0}")]
    Format(String),
    #[error("payload length mismatch: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("value error: {0}")]
    Value(String),
    #[error("invalid data config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn file_prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Images `[n, rows, cols, 1]` scaled to `[0, 1]` with digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    images: Tensor<F>,
    labels: Vec<usize>,
    split: Split,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(images: Tensor<F>, labels: Vec<usize>, split: Split) -> Result<Self, DataError> {
        if images.rank() != 4 || images.shape()[3] != 1 {
            return Err(DataError::Format(format!("images must be [n, rows, cols, 1], got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(DataError::Format(format!("{} images but {} labels", images.shape()[0], labels.len())));
        }
        if let Some(pos) = images.data().iter().position(|&p| !(p >= F::zero() && p <= F::one())) {
            return Err(DataError::Value(format!("pixel at flat index {pos} outside [0, 1]")));
        }
        if let Some(pos) = labels.iter().position(|&l| l >= NUM_CLASSES) {
            return Err(DataError::Value(format!("label {} at index {pos} is not a digit", labels[pos])));
        }
        Ok(Self { images, labels, split })
    }

    /// Pairs parsed IDX images and labels.
    pub fn from_raw(raw: &RawImages, labels: &[u8], split: Split) -> Result<Self, DataError> {
        if raw.count != labels.len() {
            return Err(DataError::Format(format!("{} images but {} labels", raw.count, labels.len())));
        }
        Self::new(normalize(raw)?, labels.iter().map(|&l| l as usize).collect(), split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor<F> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// `[rows, cols, 1]`
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// Copies the given samples into a batch tensor.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<F>, Vec<usize>) {
        let per = self.images.len() / self.len();
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&src[i * per..(i + 1) * per]);
        }
        let [r, c, ch] = self.sample_shape();
        let images = Tensor::from_vec(&[indices.len(), r, c, ch], data).expect("non-empty batch");
        (images, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Samples `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self, DataError> {
        if range.start >= range.end || range.end > self.len() {
            return Err(DataError::InvalidConfig(format!("slice {range:?} out of bounds for {} samples", self.len())));
        }
        let idx: Vec<usize> = range.collect();
        let (images, labels) = self.gather(&idx);
        Ok(Self { images, labels, split: self.split })
    }

    /// One epoch of mini-batches, see [`batch_indices`].
    pub fn batches(
        &self,
        batch_size: usize,
        shuffle: bool,
        seed: u64,
        epoch: u64,
    ) -> Result<impl Iterator<Item = (Tensor<F>, Vec<usize>)> + '_, DataError> {
        let plan = batch_indices(self.len(), batch_size, shuffle, seed, epoch)?;
        Ok(plan.into_iter().map(move |idx| self.gather(&idx)))
    }
}

/// Scales pixel bytes to `[0, 1]` by dividing by 255 and appends a channel
/// axis.
pub fn normalize<F: Scalar>(raw: &RawImages) -> Result<Tensor<F>, DataError> {
    let scale = F::from_f64_lossy(255.0);
    let data = raw.pixels.iter().map(|&p| F::from_u8(p).expect("byte fits") / scale).collect();
    Tensor::from_vec(&[raw.count, raw.rows, raw.cols, 1], data).map_err(|e| DataError::Format(e.to_string()))
}

/// Sample indices for one epoch, split into batches of `batch_size` (the last
/// may be shorter). The shuffle is a function of `seed` and `epoch` only.
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>, DataError> {
    if batch_size == 0 {
        return Err(DataError::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf, DataError> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let path = dir.join(name);
        if path.is_file() {
            return Ok(path);
        }
    }
    Err(DataError::Io {
        path: dir.join(stem),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found (also tried .gz)"),
    })
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Loads one MNIST split from `dir` using the canonical file names
/// (`train-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`, ...), raw or `.gz`.
pub fn load_mnist<F: Scalar>(dir: &Path, split: Split) -> Result<Dataset<F>, DataError> {
    let prefix = split.file_prefix();
    let images_path = locate(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let labels_path = locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let raw = parse_idx_images(&read(&images_path)?)?;
    let labels = parse_idx_labels(&read(&labels_path)?)?;
    Dataset::from_raw(&raw, &labels, split)
}
