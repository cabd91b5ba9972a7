//! Shared fixtures for the criterion benchmarks.

use sra_core::image::Image;
use sra_core::rng::{derive_stream, Purpose};

/// Deterministic noise image so every benchmark run sees identical input.
pub fn bench_image(size: usize) -> Image {
    let mut rng = derive_stream(0, 0, 0, size as u64, Purpose::Bench);
    Image::new(size, size, (0..size * size * 3).map(|_| rng.next_below(256) as u8).collect())
}
