//! Labeled datasets: CIFAR binary ingestion and a synthetic generator.

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::rng::{derive_stream, Purpose, Stream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub samples: Vec<LabeledImage>,
    pub class_count: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledImage>, class_count: usize, split: Split) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Contract(format!("class_count {class_count} < 2")));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.label >= class_count {
                return Err(Error::CorruptRecord(format!(
                    "sample {i}: label {} >= class_count {class_count}",
                    s.label
                )));
            }
        }
        Ok(Dataset { samples, class_count, split })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarFormat {
    Cifar10,
    Cifar100,
}

impl CifarFormat {
    pub fn record_size(self) -> usize {
        match self {
            CifarFormat::Cifar10 => 3073,  // label + 3072 pixels
            CifarFormat::Cifar100 => 3074, // coarse + fine + 3072 pixels
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            CifarFormat::Cifar10 => 10,
            CifarFormat::Cifar100 => 100,
        }
    }
}

const CIFAR_DIM: usize = 32;
const CIFAR_PLANE: usize = CIFAR_DIM * CIFAR_DIM;

/// Parse a CIFAR binary batch file. Planar RGB records become interleaved images.
pub fn load_cifar_batch(bytes: &[u8], format: CifarFormat, split: Split) -> Result<Dataset> {
    let rec = format.record_size();
    if bytes.is_empty() || !bytes.len().is_multiple_of(rec) {
        return Err(Error::MalformedInput(format!(
            "byte length {} is not a positive multiple of record size {rec}",
            bytes.len()
        )));
    }
    let class_count = format.class_count();
    let mut samples = Vec::with_capacity(bytes.len() / rec);
    for (ri, record) in bytes.chunks_exact(rec).enumerate() {
        let label = match format {
            CifarFormat::Cifar10 => record[0] as usize,
            CifarFormat::Cifar100 => record[1] as usize, // fine label
        };
        if label >= class_count {
            return Err(Error::CorruptRecord(format!(
                "record {ri}: label byte {label} >= class_count {class_count}"
            )));
        }
        let planes = &record[rec - 3 * CIFAR_PLANE..];
        let mut data = vec![0u8; CIFAR_PLANE * CHANNELS];
        for p in 0..CIFAR_PLANE {
            data[p * 3] = planes[p];
            data[p * 3 + 1] = planes[CIFAR_PLANE + p];
            data[p * 3 + 2] = planes[2 * CIFAR_PLANE + p];
        }
        samples.push(LabeledImage { image: Image::new(CIFAR_DIM, CIFAR_DIM, data), label });
    }
    Dataset::new(samples, class_count, split)
}

/// Deterministic synthetic dataset: one colored geometric shape per class on a
/// noise background. Separable enough for a tiny CNN to beat chance.
pub fn synthesize_dataset(
    seed: u64,
    class_count: usize,
    samples_per_class: usize,
    size: usize,
    split: Split,
) -> Result<Dataset> {
    if class_count < 2 {
        return Err(Error::Contract(format!("class_count {class_count} < 2")));
    }
    let split_tag = match split {
        Split::Train => 0,
        Split::Test => 1 << 32,
    };
    let mut samples = Vec::with_capacity(class_count * samples_per_class);
    for class in 0..class_count {
        for k in 0..samples_per_class {
            let mut rng = derive_stream(
                seed,
                split_tag | class as u64,
                k as u64,
                0,
                Purpose::Synth,
            );
            samples.push(LabeledImage {
                image: render_sample(class, class_count, size, &mut rng),
                label: class,
            });
        }
    }
    Dataset::new(samples, class_count, split)
}

fn class_color(class: usize, class_count: usize) -> [u8; 3] {
    // Evenly spaced hues at full saturation.
    let h = class as f64 / class_count as f64 * 6.0;
    let sector = h.floor() as usize % 6;
    let f = h - h.floor();
    let q = ((1.0 - f) * 255.0) as u8;
    let t = (f * 255.0) as u8;
    match sector {
        0 => [255, t, 0],
        1 => [q, 255, 0],
        2 => [0, 255, t],
        3 => [0, q, 255],
        4 => [t, 0, 255],
        _ => [255, 0, q],
    }
}

fn render_sample(class: usize, class_count: usize, size: usize, rng: &mut Stream) -> Image {
    let mut img = Image::filled(size, size, [0, 0, 0]);
    // Mild noise background.
    for y in 0..size {
        for x in 0..size {
            let v = 96 + rng.next_below(64) as u8;
            let n = rng.next_below(33) as i32 - 16;
            let g = (v as i32 + n).clamp(0, 255) as u8;
            img.set_pixel(x, y, [v, g, v]);
        }
    }
    let color = class_color(class, class_count);
    let shape = class % 4;
    let c = size as f64 / 2.0;
    let jitter_x = rng.next_f64() * 4.0 - 2.0;
    let jitter_y = rng.next_f64() * 4.0 - 2.0;
    let (cx, cy) = (c + jitter_x, c + jitter_y);
    let r = size as f64 * 0.28 + rng.next_f64() * 2.0;
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let inside = match shape {
                0 => dx * dx + dy * dy <= r * r,                        // disk
                1 => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,      // square
                2 => dx.abs() + dy.abs() <= r * 1.15,                   // diamond
                _ => dx.abs() <= r * 0.35 || dy.abs() <= r * 0.35,      // cross
            };
            if inside {
                img.set_pixel(x, y, color);
            }
        }
    }
    img
}
