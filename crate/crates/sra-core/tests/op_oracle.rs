//! Independent per-pixel oracle for the geometric operators.
//!
//! The oracle rebuilds each transform from its definition (shear/translate/
//! rotate about the image center, inverse mapping, bilinear sampling with
//! fill blending, round half away from zero) with no code shared with the
//! production kernels, and demands byte-exact agreement.

use sra_core::image::Image;
use sra_core::ops::{apply_op, OpApplication, OpKind, DEFAULT_FILL};
use sra_core::rng::{derive_stream, Purpose, Stream};

fn random_image(rng: &mut Stream, w: usize, h: usize) -> Image {
    Image::new(w, h, (0..w * h * 3).map(|_| rng.next_below(256) as u8).collect())
}

fn round_half_away(x: f64) -> f64 {
    if x >= 0.0 {
        (x + 0.5).floor()
    } else {
        (x - 0.5).ceil()
    }
}

/// Naive warp: for every output pixel invert the 2x3 matrix, sample the four
/// neighbors, blend out-of-bounds corners with the fill color.
fn oracle_warp(img: &Image, m: [f64; 6], fill: [u8; 3]) -> Image {
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let det = m[0] * m[4] - m[1] * m[3];
    let mut out = Image::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let vx = x as f64 - cx - m[2];
            let vy = y as f64 - cy - m[5];
            let sx = (m[4] / det) * vx + (-m[1] / det) * vy + cx;
            let sy = (-m[3] / det) * vx + (m[0] / det) * vy + cy;
            let x0 = sx.floor() as i64;
            let y0 = sy.floor() as i64;
            let fx = sx - sx.floor();
            let fy = sy - sy.floor();
            let mut acc = [0.0f64; 3];
            for (dx, dy, weight) in [
                (0i64, 0i64, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                let (px, py) = (x0 + dx, y0 + dy);
                let sample = if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    img.pixel(px as usize, py as usize)
                } else {
                    fill
                };
                for c in 0..3 {
                    acc[c] += weight * sample[c] as f64;
                }
            }
            out.set_pixel(
                x,
                y,
                [
                    round_half_away(acc[0]).clamp(0.0, 255.0) as u8,
                    round_half_away(acc[1]).clamp(0.0, 255.0) as u8,
                    round_half_away(acc[2]).clamp(0.0, 255.0) as u8,
                ],
            );
        }
    }
    out
}

/// Oracle matrix for each geometric kind, from the magnitude mapping rules.
fn oracle_matrix(kind: OpKind, m: f64, sign: f64, w: usize, h: usize) -> [f64; 6] {
    match kind {
        OpKind::ShearX => [1.0, sign * 0.3 * m, 0.0, 0.0, 1.0, 0.0],
        OpKind::ShearY => [1.0, 0.0, 0.0, sign * 0.3 * m, 1.0, 0.0],
        OpKind::TranslateX => [1.0, 0.0, (sign * 0.45 * m * w as f64).trunc(), 0.0, 1.0, 0.0],
        OpKind::TranslateY => [1.0, 0.0, 0.0, 0.0, 1.0, (sign * 0.45 * m * h as f64).trunc()],
        OpKind::Rotate => {
            let rad = (sign * 30.0 * m).to_radians();
            [rad.cos(), -rad.sin(), 0.0, rad.sin(), rad.cos(), 0.0]
        }
        _ => unreachable!(),
    }
}

#[test]
fn geometric_kinds_match_oracle_byte_exact() {
    let kinds = [
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
        OpKind::Rotate,
    ];
    for kind in kinds {
        for case in 0..100u64 {
            let mut rng = derive_stream(case, 0, 0, kind as u64, Purpose::Synth);
            let img = random_image(&mut rng, 16, 16);
            let m = rng.next_f64();
            let sign: i8 = if rng.next_bool() { 1 } else { -1 };
            let got = apply_op(&img, &OpApplication::new(kind, m, sign, DEFAULT_FILL)).unwrap();
            let matrix = oracle_matrix(kind, m, sign as f64, 16, 16);
            let want = oracle_warp(&img, matrix, DEFAULT_FILL);
            assert_eq!(got, want, "{kind:?} case {case} m={m} sign={sign}");
        }
    }
}

#[test]
fn oracle_agrees_on_nonsquare_images() {
    for case in 0..25u64 {
        let mut rng = derive_stream(case, 1, 0, 0, Purpose::Synth);
        let w = 5 + rng.next_below(20) as usize;
        let h = 5 + rng.next_below(20) as usize;
        let img = random_image(&mut rng, w, h);
        let m = rng.next_f64();
        let sign: i8 = if rng.next_bool() { 1 } else { -1 };
        for kind in [OpKind::Rotate, OpKind::TranslateX, OpKind::ShearY] {
            let got = apply_op(&img, &OpApplication::new(kind, m, sign, [0, 0, 0])).unwrap();
            let want = oracle_warp(&img, oracle_matrix(kind, m, sign as f64, w, h), [0, 0, 0]);
            assert_eq!(got, want, "{kind:?} case {case} {w}x{h}");
        }
    }
}
