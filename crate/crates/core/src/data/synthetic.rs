//! Seeded stand-in for MNIST: one stroke pattern per class, randomly shifted,
//! thickened and dimmed, plus background noise.
//!
//! Sample `i` of seed `s` depends only on `(s, i)`, so `synthetic_range(s, n, m)`
//! is a held-out continuation of `synthetic_dataset(s, n)`. Label `i % 10`
//! keeps classes balanced over any run of ten consecutive indices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, RawImages, Split, NUM_CLASSES};
use crate::tensor::Scalar;

const SIDE: usize = 28;

/// Raw bytes and labels for samples `start..start + count`.
pub fn synthetic_raw(seed: u64, start: usize, count: usize) -> (RawImages, Vec<u8>) {
    let mut pixels = Vec::with_capacity(count * SIDE * SIDE);
    let mut labels = Vec::with_capacity(count);
    for i in start..start + count {
        let label = (i % NUM_CLASSES) as u8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        pixels.extend(render(label, &mut rng));
        labels.push(label);
    }
    (RawImages { count, rows: SIDE, cols: SIDE, pixels }, labels)
}

/// Samples `start..start + count` as a dataset.
pub fn synthetic_range<F: Scalar>(seed: u64, start: usize, count: usize) -> Dataset<F> {
    assert!(count >= 1, "synthetic dataset needs at least one sample");
    let (raw, labels) = synthetic_raw(seed, start, count);
    Dataset::from_raw(&raw, &labels, Split::Train).expect("generated data is valid")
}

/// The first `n` samples for `seed`.
pub fn synthetic_dataset<F: Scalar>(seed: u64, n: usize) -> Dataset<F> {
    synthetic_range(seed, 0, n)
}

fn render(label: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let cx = 13.5 + rng.gen_range(-3i32..=3) as f32;
    let cy = 13.5 + rng.gen_range(-3i32..=3) as f32;
    let half = rng.gen_range(0.9f32..1.6);
    let ink = rng.gen_range(0.65f32..1.0);
    let noise = 0.25f32;
    let mut out = Vec::with_capacity(SIDE * SIDE);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let v = if on_stroke(label, dx, dy, half) { ink } else { 0.0 };
            let v = (v + rng.gen_range(0.0..noise)).min(1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

fn on_stroke(label: u8, dx: f32, dy: f32, half: f32) -> bool {
    let bar_v = |ox: f32, len: f32| (dx - ox).abs() <= half && dy.abs() <= len;
    let bar_h = |oy: f32, len: f32| (dy - oy).abs() <= half && dx.abs() <= len;
    let diag = |sign: f32, len: f32| (dx - sign * dy).abs() <= half * 1.4 && dy.abs() <= len;
    match label {
        0 => ((dx * dx + dy * dy).sqrt() - 7.0).abs() <= half,
        1 => bar_v(0.0, 9.0),
        2 => bar_h(0.0, 9.0),
        3 => diag(1.0, 8.0),
        4 => diag(-1.0, 8.0),
        5 => bar_v(0.0, 6.0) || bar_h(0.0, 6.0),
        6 => diag(1.0, 6.0) || diag(-1.0, 6.0),
        7 => dx.abs() <= 5.0 && dy.abs() <= 5.0,
        8 => bar_h(-4.5, 8.0) || bar_h(4.5, 8.0),
        _ => bar_v(-4.5, 8.0) || bar_v(4.5, 8.0),
    }
}
