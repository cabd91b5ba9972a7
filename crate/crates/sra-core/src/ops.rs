//! The 14 candidate augmentation operators with continuous magnitudes.
//!
//! Every operator takes a magnitude m in [0,1] mapped to its native range.
//! All kernels are pure functions on byte images; any real value narrowed to
//! a byte is rounded half away from zero.

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

pub const DEFAULT_FILL: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    Brightness,
    Color,
    Sharpness,
    Contrast,
    Solarize,
    Posterize,
    Equalize,
    AutoContrast,
    Identity,
}

pub const ALL_OPS: [OpKind; 14] = [
    OpKind::ShearX,
    OpKind::ShearY,
    OpKind::TranslateX,
    OpKind::TranslateY,
    OpKind::Rotate,
    OpKind::Brightness,
    OpKind::Color,
    OpKind::Sharpness,
    OpKind::Contrast,
    OpKind::Solarize,
    OpKind::Posterize,
    OpKind::Equalize,
    OpKind::AutoContrast,
    OpKind::Identity,
];

impl OpKind {
    /// Kinds whose native range is symmetric around the neutral point and so
    /// consume the sampled sign (geometric ops and the four enhancement ops,
    /// whose factor range [0.1, 1.9] straddles 1.0).
    pub fn is_signed(self) -> bool {
        matches!(
            self,
            OpKind::ShearX
                | OpKind::ShearY
                | OpKind::TranslateX
                | OpKind::TranslateY
                | OpKind::Rotate
                | OpKind::Brightness
                | OpKind::Color
                | OpKind::Sharpness
                | OpKind::Contrast
        )
    }

    pub fn is_parameterless(self) -> bool {
        matches!(self, OpKind::Equalize | OpKind::AutoContrast | OpKind::Identity)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::ShearX => "shear_x",
            OpKind::ShearY => "shear_y",
            OpKind::TranslateX => "translate_x",
            OpKind::TranslateY => "translate_y",
            OpKind::Rotate => "rotate",
            OpKind::Brightness => "brightness",
            OpKind::Color => "color",
            OpKind::Sharpness => "sharpness",
            OpKind::Contrast => "contrast",
            OpKind::Solarize => "solarize",
            OpKind::Posterize => "posterize",
            OpKind::Equalize => "equalize",
            OpKind::AutoContrast => "auto_contrast",
            OpKind::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        ALL_OPS.iter().copied().find(|k| k.name() == name)
    }
}

/// One operator instance: kind, magnitude in [0,1], sign, and fill color for
/// pixels warped in from outside the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpApplication {
    pub kind: OpKind,
    pub magnitude: f64,
    pub sign: i8,
    pub fill: [u8; 3],
}

impl OpApplication {
    pub fn new(kind: OpKind, magnitude: f64, sign: i8, fill: [u8; 3]) -> Self {
        debug_assert!((0.0..=1.0).contains(&magnitude));
        debug_assert!(sign == 1 || sign == -1);
        OpApplication { kind, magnitude, sign, fill }
    }
}

/// Operator-native parameter produced by [`map_magnitude`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpParam {
    /// Shear coefficient in [-0.3, 0.3].
    Shear(f64),
    /// Translation as a fraction of the image dimension, in [-0.45, 0.45].
    TranslateFrac(f64),
    /// Rotation in degrees, [-30, 30].
    RotateDeg(f64),
    /// Blend factor in [0.1, 1.9].
    EnhanceFactor(f64),
    /// Inversion threshold in [0, 256]; 256 inverts nothing.
    SolarizeThreshold(u16),
    /// Low bits zeroed, in [0, 4].
    PosterizeBitsDropped(u8),
    NoParam,
}

fn check_magnitude(m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Contract(format!("magnitude {m} outside [0,1]")));
    }
    Ok(())
}

/// Map a unit magnitude onto the operator's valid range.
pub fn map_magnitude(kind: OpKind, m: f64, sign: i8) -> Result<OpParam> {
    check_magnitude(m)?;
    let s = sign as f64;
    Ok(match kind {
        OpKind::ShearX | OpKind::ShearY => OpParam::Shear(s * 0.3 * m),
        OpKind::TranslateX | OpKind::TranslateY => OpParam::TranslateFrac(s * 0.45 * m),
        OpKind::Rotate => OpParam::RotateDeg(s * 30.0 * m),
        OpKind::Brightness | OpKind::Color | OpKind::Sharpness | OpKind::Contrast => {
            OpParam::EnhanceFactor(1.0 + s * 0.9 * m)
        }
        OpKind::Solarize => OpParam::SolarizeThreshold((256.0 * (1.0 - m)).round() as u16),
        OpKind::Posterize => OpParam::PosterizeBitsDropped((4.0 * m).round() as u8),
        OpKind::Equalize | OpKind::AutoContrast | OpKind::Identity => OpParam::NoParam,
    })
}

#[inline]
fn clamp_byte(x: f64) -> u8 {
    // f64::round is round-half-away-from-zero.
    x.round().clamp(0.0, 255.0) as u8
}

const IDENTITY_MATRIX: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Inverse-mapping affine warp about the image center with bilinear sampling.
///
/// `m` is row-major `[a, b, tx, c, d, ty]` acting on coordinates centered at
/// ((W-1)/2, (H-1)/2): for each output pixel, the source coordinate is
/// m⁻¹·(output − center) + center. Samples whose bilinear footprint leaves
/// [0,W-1]×[0,H-1] blend with `fill` by coverage.
pub fn affine_warp(img: &Image, m: [f64; 6], fill: [u8; 3]) -> Result<Image> {
    let det = m[0] * m[4] - m[1] * m[3];
    if det.abs() < 1e-12 {
        return Err(Error::Contract("singular linear part in affine warp".into()));
    }
    if m == IDENTITY_MATRIX {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    // Inverse of [A | t]: x = A⁻¹(y − t).
    let inv = [m[4] / det, -m[1] / det, -m[3] / det, m[0] / det];
    let mut out = vec![0u8; w * h * CHANNELS];
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - m[2];
            let dy = y as f64 - cy - m[5];
            let sx = inv[0] * dx + inv[1] * dy + cx;
            let sy = inv[2] * dx + inv[3] * dy + cy;
            let px = bilinear_sample(img, sx, sy, fill);
            let o = (y * w + x) * CHANNELS;
            out[o..o + 3].copy_from_slice(&px);
        }
    }
    Ok(Image::new(w, h, out))
}

#[inline]
fn bilinear_sample(img: &Image, sx: f64, sy: f64, fill: [u8; 3]) -> [u8; 3] {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let weights = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1.0, y0, fx * (1.0 - fy)),
        (x0, y0 + 1.0, (1.0 - fx) * fy),
        (x0 + 1.0, y0 + 1.0, fx * fy),
    ];
    let mut acc = [0.0f64; 3];
    for (px, py, wgt) in weights {
        let sample = if px >= 0.0 && py >= 0.0 && (px as usize) < img.width() && (py as usize) < img.height()
        {
            img.pixel(px as usize, py as usize)
        } else {
            fill
        };
        for c in 0..3 {
            acc[c] += wgt * sample[c] as f64;
        }
    }
    [clamp_byte(acc[0]), clamp_byte(acc[1]), clamp_byte(acc[2])]
}

#[inline]
fn luma(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Blend toward a (real-valued) degenerate image:
/// out = clamp(round(d + f·(img − d)), 0, 255) per channel.
pub fn blend(img: &Image, degenerate: &[f64], f: f64) -> Result<Image> {
    if degenerate.len() != img.data().len() {
        return Err(Error::Contract("blend dimension mismatch".into()));
    }
    let data = img
        .data()
        .iter()
        .zip(degenerate)
        .map(|(&v, &d)| clamp_byte(d + f * (v as f64 - d)))
        .collect();
    Ok(Image::new(img.width(), img.height(), data))
}

fn degenerate_black(img: &Image) -> Vec<f64> {
    vec![0.0; img.data().len()]
}

fn degenerate_grayscale(img: &Image) -> Vec<f64> {
    let mut d = Vec::with_capacity(img.data().len());
    for p in img.data().chunks_exact(3) {
        let l = luma([p[0], p[1], p[2]]);
        d.extend_from_slice(&[l, l, l]);
    }
    d
}

fn degenerate_mean_luma(img: &Image) -> Vec<f64> {
    let n = (img.width() * img.height()) as f64;
    let mean: f64 = img.data().chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).sum::<f64>() / n;
    vec![mean.round(); img.data().len()]
}

/// 3x3 smoothing with kernel [[1,1,1],[1,5,1],[1,1,1]]/13; border rows and
/// columns keep the original pixel values.
fn degenerate_smooth(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut d: Vec<f64> = img.data().iter().map(|&b| b as f64).collect();
    if w < 3 || h < 3 {
        return d;
    }
    const KERNEL: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for c in 0..3 {
                let mut acc = 0.0;
                for (ky, row) in KERNEL.iter().enumerate() {
                    for (kx, &kv) in row.iter().enumerate() {
                        let p = img.pixel(x + kx - 1, y + ky - 1);
                        acc += kv * p[c] as f64;
                    }
                }
                d[(y * w + x) * CHANNELS + c] = acc / 13.0;
            }
        }
    }
    d
}

/// PIL-style histogram equalization, per channel.
pub fn equalize(img: &Image) -> Image {
    let mut out = img.clone();
    let n = img.width() * img.height();
    for c in 0..3 {
        let mut hist = [0u64; 256];
        for p in img.data().chunks_exact(3) {
            hist[p[c] as usize] += 1;
        }
        let last_nonzero = (0..256).rev().find(|&i| hist[i] > 0).unwrap();
        let step = (n as u64 - hist[last_nonzero]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0u8; 256];
        let mut cum = step / 2;
        for (i, l) in lut.iter_mut().enumerate() {
            *l = (cum / step).min(255) as u8;
            cum += hist[i];
        }
        for p in out.data_mut().chunks_exact_mut(3) {
            p[c] = lut[p[c] as usize];
        }
    }
    out
}

/// Per channel, linearly remap [min, max] to [0, 255]; constant channels are
/// left unchanged.
pub fn auto_contrast(img: &Image) -> Image {
    let mut out = img.clone();
    for c in 0..3 {
        let (mut lo, mut hi) = (255u8, 0u8);
        for p in img.data().chunks_exact(3) {
            lo = lo.min(p[c]);
            hi = hi.max(p[c]);
        }
        if lo >= hi {
            continue;
        }
        let scale = 255.0 / (hi - lo) as f64;
        let mut lut = [0u8; 256];
        for (i, l) in lut.iter_mut().enumerate() {
            *l = clamp_byte((i as f64 - lo as f64) * scale);
        }
        for p in out.data_mut().chunks_exact_mut(3) {
            p[c] = lut[p[c] as usize];
        }
    }
    out
}

fn solarize(img: &Image, threshold: u16) -> Image {
    let data = img
        .data()
        .iter()
        .map(|&v| if v as u16 >= threshold { 255 - v } else { v })
        .collect();
    Image::new(img.width(), img.height(), data)
}

fn posterize(img: &Image, bits_dropped: u8) -> Image {
    if bits_dropped == 0 {
        return img.clone();
    }
    let mask = !((1u16 << bits_dropped) - 1) as u8;
    let data = img.data().iter().map(|&v| v & mask).collect();
    Image::new(img.width(), img.height(), data)
}

fn shear_matrix(kind: OpKind, s: f64) -> [f64; 6] {
    match kind {
        OpKind::ShearX => [1.0, s, 0.0, 0.0, 1.0, 0.0],
        _ => [1.0, 0.0, 0.0, s, 1.0, 0.0],
    }
}

/// Apply one operator instance to an image.
pub fn apply_op(img: &Image, app: &OpApplication) -> Result<Image> {
    check_magnitude(app.magnitude)?;
    if app.sign != 1 && app.sign != -1 {
        return Err(Error::Contract(format!("sign {} not in {{+1,-1}}", app.sign)));
    }
    let param = map_magnitude(app.kind, app.magnitude, app.sign)?;
    match (app.kind, param) {
        (OpKind::Identity, _) => Ok(img.clone()),
        (kind @ (OpKind::ShearX | OpKind::ShearY), OpParam::Shear(s)) => {
            affine_warp(img, shear_matrix(kind, s), app.fill)
        }
        (kind @ (OpKind::TranslateX | OpKind::TranslateY), OpParam::TranslateFrac(frac)) => {
            // Fraction of the corresponding dimension, truncated toward zero.
            let (tx, ty) = match kind {
                OpKind::TranslateX => ((frac * img.width() as f64).trunc(), 0.0),
                _ => (0.0, (frac * img.height() as f64).trunc()),
            };
            affine_warp(img, [1.0, 0.0, tx, 0.0, 1.0, ty], app.fill)
        }
        (OpKind::Rotate, OpParam::RotateDeg(deg)) => {
            let r = deg.to_radians();
            let (sin, cos) = r.sin_cos();
            affine_warp(img, [cos, -sin, 0.0, sin, cos, 0.0], app.fill)
        }
        (OpKind::Brightness, OpParam::EnhanceFactor(f)) => blend(img, &degenerate_black(img), f),
        (OpKind::Color, OpParam::EnhanceFactor(f)) => blend(img, &degenerate_grayscale(img), f),
        (OpKind::Contrast, OpParam::EnhanceFactor(f)) => blend(img, &degenerate_mean_luma(img), f),
        (OpKind::Sharpness, OpParam::EnhanceFactor(f)) => blend(img, &degenerate_smooth(img), f),
        (OpKind::Solarize, OpParam::SolarizeThreshold(t)) => Ok(solarize(img, t)),
        (OpKind::Posterize, OpParam::PosterizeBitsDropped(b)) => Ok(posterize(img, b)),
        (OpKind::Equalize, _) => Ok(equalize(img)),
        (OpKind::AutoContrast, _) => Ok(auto_contrast(img)),
        _ => unreachable!("map_magnitude returned mismatched param"),
    }
}
