//! IDX container reader and writer.
//!
//! Layout: a big-endian `u32` magic (`0x00000803` for 3-d unsigned byte
//! images, `0x00000801` for 1-d labels), one big-endian `u32` per dimension,
//! then the raw payload. Gzip input (leading `1f 8b`) is inflated first.

use std::borrow::Cow;
use std::io::Read;

use flate2::read::GzDecoder;

use super::DataError;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const GZIP_SIGNATURE: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn byte_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

/// Undecoded images: `count * rows * cols` pixel bytes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// Inflates gzip input; anything else is returned as-is.
pub fn decompress(bytes: &[u8]) -> Result<Cow<'_, [u8]>, DataError> {
    if bytes.starts_with(&GZIP_SIGNATURE) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| DataError::Format(format!("corrupt gzip stream: {e}")))?;
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(bytes))
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    bytes.get(offset..offset + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads and validates the header, then checks the payload length.
fn parse_header(bytes: &[u8], magic: u32, rank: usize, what: &str) -> Result<IdxHeader, DataError> {
    let found =
        read_u32(bytes, 0).ok_or_else(|| DataError::Format(format!("{what} file shorter than its magic number")))?;
    if found != magic {
        return Err(DataError::Format(format!("{what} file has magic {found:#010x}, expected {magic:#010x}")));
    }
    let dims = (0..rank)
        .map(|i| read_u32(bytes, 4 + 4 * i))
        .collect::<Option<Vec<u32>>>()
        .ok_or_else(|| DataError::Format(format!("{what} header truncated")))?;
    let header = IdxHeader { magic, dims };
    let expected = header.payload_len();
    let actual = bytes.len() - header.byte_len();
    if expected != actual {
        return Err(DataError::Truncated { expected, actual });
    }
    Ok(header)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages, DataError> {
    let bytes = decompress(bytes)?;
    let header = parse_header(&bytes, IMAGE_MAGIC, 3, "image")?;
    let [count, rows, cols] = [header.dims[0], header.dims[1], header.dims[2]].map(|d| d as usize);
    Ok(RawImages { count, rows, cols, pixels: bytes[header.byte_len()..].to_vec() })
}

/// Parses a label file; every label must be a digit 0-9.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let bytes = decompress(bytes)?;
    let header = parse_header(&bytes, LABEL_MAGIC, 1, "label")?;
    let labels = bytes[header.byte_len()..].to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(DataError::Value(format!("label {} at index {pos} is not a digit", labels[pos])));
    }
    Ok(labels)
}

pub fn write_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for d in [images.count, images.rows, images.cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
