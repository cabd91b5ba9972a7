//! Tiny convolutional classifier with explicit forward/backward passes.
//!
//! Architecture: conv3x3(3->c1)-relu-maxpool2-conv3x3(c1->c2)-relu-maxpool2-
//! gap-linear(c2->classes). All math is f64; checkpoints narrow to f32.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub conv1: usize,
    pub conv2: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn tiny(classes: usize) -> Self {
        Architecture { conv1: 16, conv2: 32, classes }
    }

    pub fn param_count(&self) -> usize {
        let w1 = self.conv1 * 3 * 9 + self.conv1;
        let w2 = self.conv2 * self.conv1 * 9 + self.conv2;
        let fc = self.classes * self.conv2 + self.classes;
        w1 + w2 + fc
    }

    pub fn descriptor(&self) -> String {
        format!(
            "conv3x3(3->{})-relu-maxpool2-conv3x3({}->{})-relu-maxpool2-gap-linear({}->{})",
            self.conv1, self.conv1, self.conv2, self.conv2, self.classes
        )
    }

    pub fn from_descriptor(s: &str) -> Result<Self> {
        // The three arrow targets are c1, c2, and the class count.
        let arrows: Vec<usize> = s
            .split("->")
            .skip(1)
            .filter_map(|t| {
                let digits: String = t.chars().take_while(|c| c.is_ascii_digit()).collect();
                digits.parse().ok()
            })
            .collect();
        match arrows.as_slice() {
            [c1, c2, classes] if *c1 > 0 && *c2 > 0 && *classes > 0 => {
                Ok(Architecture { conv1: *c1, conv2: *c2, classes: *classes })
            }
            _ => Err(Error::MalformedInput(format!("unrecognized architecture descriptor: {s}"))),
        }
    }

    // Flat parameter vector offsets.
    fn off_b1(&self) -> usize {
        self.conv1 * 27
    }
    fn off_w2(&self) -> usize {
        self.off_b1() + self.conv1
    }
    fn off_b2(&self) -> usize {
        self.off_w2() + self.conv2 * self.conv1 * 9
    }
    fn off_wf(&self) -> usize {
        self.off_b2() + self.conv2
    }
    fn off_bf(&self) -> usize {
        self.off_wf() + self.classes * self.conv2
    }
}

/// Per-channel byte-to-real normalization: (v/255 - mean) / std.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { mean: [0.5; 3], std: [0.5; 3] }
    }
}

/// Normalized image batch, layout [n][channel][y][x].
#[derive(Debug, Clone)]
pub struct InputBatch {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

pub fn normalize_batch(images: &[&Image], norm: &Normalization) -> InputBatch {
    assert!(!images.is_empty());
    let (w, h) = (images[0].width(), images[0].height());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        assert_eq!((img.width(), img.height()), (w, h), "mixed image sizes in batch");
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let v = img.pixel(x, y)[c] as f64 / 255.0;
                    data.push((v - norm.mean[c]) / norm.std[c]);
                }
            }
        }
    }
    InputBatch { n: images.len(), height: h, width: w, data }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: Vec<f64>,
}

struct ForwardCache {
    x: Vec<f64>,
    z1: Vec<f64>,
    p1: Vec<f64>,
    idx1: Vec<usize>,
    z2: Vec<f64>,
    p2_idx: Vec<usize>,
    gap: Vec<f64>,
    logits: Vec<f64>,
    n: usize,
    h: usize,
    w: usize,
}

impl Model {
    /// He-style fan-in scaled init from a deterministic stream; biases zero.
    pub fn init(arch: Architecture, rng: &mut Stream) -> Self {
        let mut params = vec![0.0; arch.param_count()];
        let scales = [
            (0, arch.conv1 * 27, (2.0 / 27.0f64).sqrt()),
            (arch.off_w2(), arch.conv2 * arch.conv1 * 9, (2.0 / (arch.conv1 * 9) as f64).sqrt()),
            (arch.off_wf(), arch.classes * arch.conv2, (2.0 / arch.conv2 as f64).sqrt()),
        ];
        for (start, len, scale) in scales {
            for p in params[start..start + len].iter_mut() {
                *p = rng.next_normal() * scale;
            }
        }
        Model { arch, params }
    }

    // The output-channel index addresses biases, weights, and the output
    // block simultaneously; an iterator form only obscures that.
    #[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
    fn conv_forward(
        &self,
        input: &[f64],
        n: usize,
        ic: usize,
        oc: usize,
        h: usize,
        w: usize,
        w_off: usize,
        b_off: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; n * oc * h * w];
        let weights = &self.params[w_off..w_off + oc * ic * 9];
        let biases = &self.params[b_off..b_off + oc];
        for ni in 0..n {
            for o in 0..oc {
                let ob = ((ni * oc) + o) * h * w;
                out[ob..ob + h * w].fill(biases[o]);
                for i in 0..ic {
                    let ib = ((ni * ic) + i) * h * w;
                    let wb = (o * ic + i) * 9;
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let wv = weights[wb + ky * 3 + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            let (y0, y1) = pad_range(ky, h);
                            let (x0, x1) = pad_range(kx, w);
                            for y in y0..y1 {
                                let iy = y + ky - 1;
                                let orow = ob + y * w;
                                let irow = ib + iy * w;
                                for x in x0..x1 {
                                    out[orow + x] += wv * input[irow + x + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn forward_cached(&self, batch: &InputBatch) -> ForwardCache {
        let a = self.arch;
        let (n, h, w) = (batch.n, batch.height, batch.width);
        let z1 = self.conv_forward(&batch.data, n, 3, a.conv1, h, w, 0, a.off_b1());
        let r1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let (h1, w1) = (h / 2, w / 2);
        let (p1, idx1) = maxpool2(&r1, n * a.conv1, h, w);
        let z2 = self.conv_forward(&p1, n, a.conv1, a.conv2, h1, w1, a.off_w2(), a.off_b2());
        let r2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();
        let (h2, w2) = (h1 / 2, w1 / 2);
        let (p2, p2_idx) = maxpool2(&r2, n * a.conv2, h1, w1);
        let spatial = (h2 * w2) as f64;
        let mut gap = vec![0.0; n * a.conv2];
        for (g, chunk) in gap.iter_mut().zip(p2.chunks_exact(h2 * w2)) {
            *g = chunk.iter().sum::<f64>() / spatial;
        }
        let wf = &self.params[a.off_wf()..a.off_wf() + a.classes * a.conv2];
        let bf = &self.params[a.off_bf()..a.off_bf() + a.classes];
        let mut logits = vec![0.0; n * a.classes];
        for ni in 0..n {
            for k in 0..a.classes {
                let mut acc = bf[k];
                for c in 0..a.conv2 {
                    acc += wf[k * a.conv2 + c] * gap[ni * a.conv2 + c];
                }
                logits[ni * a.classes + k] = acc;
            }
        }
        ForwardCache { x: batch.data.clone(), z1, p1, idx1, z2, p2_idx, gap, logits, n, h, w }
    }

    /// Forward pass only: batch-of-n logits, row per sample.
    pub fn forward(&self, batch: &InputBatch) -> Vec<f64> {
        self.forward_cached(batch).logits
    }

    /// Mean cross-entropy against label-smoothed targets, plus the full
    /// parameter gradient via backpropagation.
    pub fn loss_and_grad(
        &self,
        batch: &InputBatch,
        labels: &[usize],
        smoothing: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let a = self.arch;
        let c = a.classes;
        if labels.len() != batch.n {
            return Err(Error::Contract("label count != batch size".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Contract(format!("label {bad} >= class count {c}")));
        }
        let cache = self.forward_cached(batch);
        let n = cache.n;
        let nf = n as f64;

        // Softmax CE with smoothed targets; dlogits = (p - t) / n.
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; n * c];
        for ni in 0..n {
            let row = &cache.logits[ni * c..(ni + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let logsum = sum.ln() + max;
            for k in 0..c {
                let t = smoothing / c as f64 + if k == labels[ni] { 1.0 - smoothing } else { 0.0 };
                loss -= t * (row[k] - logsum);
                dlogits[ni * c + k] = (exps[k] / sum - t) / nf;
            }
        }
        loss /= nf;

        let mut grad = vec![0.0; self.params.len()];
        let (h, w) = (cache.h, cache.w);
        let (h1, w1) = (h / 2, w / 2);
        let (h2, w2) = (h1 / 2, w1 / 2);

        // Linear layer.
        let wf = &self.params[a.off_wf()..a.off_wf() + c * a.conv2];
        let mut dgap = vec![0.0; n * a.conv2];
        for ni in 0..n {
            for k in 0..c {
                let dl = dlogits[ni * c + k];
                grad[a.off_bf() + k] += dl;
                for ch in 0..a.conv2 {
                    grad[a.off_wf() + k * a.conv2 + ch] += dl * cache.gap[ni * a.conv2 + ch];
                    dgap[ni * a.conv2 + ch] += dl * wf[k * a.conv2 + ch];
                }
            }
        }

        // GAP -> pool2 output.
        let spatial2 = (h2 * w2) as f64;
        let mut dp2 = vec![0.0; n * a.conv2 * h2 * w2];
        for (chunk, &dg) in dp2.chunks_exact_mut(h2 * w2).zip(dgap.iter()) {
            chunk.fill(dg / spatial2);
        }

        // Pool2 and ReLU2 backward.
        let mut dz2 = vec![0.0; n * a.conv2 * h1 * w1];
        for (flat, &d) in dp2.iter().enumerate() {
            dz2[cache.p2_idx[flat]] += d;
        }
        for (d, &z) in dz2.iter_mut().zip(cache.z2.iter()) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }

        // Conv2 backward: weight grads and input grads.
        let mut dp1 = vec![0.0; n * a.conv1 * h1 * w1];
        conv_backward(
            &cache.p1,
            &dz2,
            &self.params[a.off_w2()..a.off_w2() + a.conv2 * a.conv1 * 9],
            &mut grad[a.off_w2()..a.off_b2() + a.conv2],
            Some(&mut dp1),
            n,
            a.conv1,
            a.conv2,
            h1,
            w1,
        );

        // Pool1 and ReLU1 backward.
        let mut dz1 = vec![0.0; n * a.conv1 * h * w];
        for (flat, &d) in dp1.iter().enumerate() {
            dz1[cache.idx1[flat]] += d;
        }
        for (d, &z) in dz1.iter_mut().zip(cache.z1.iter()) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }

        // Conv1 backward: weight grads only (no input grad needed).
        conv_backward(
            &cache.x,
            &dz1,
            &self.params[0..a.conv1 * 27],
            &mut grad[0..a.off_b1() + a.conv1],
            None,
            n,
            3,
            a.conv1,
            h,
            w,
        );

        Ok((loss, grad))
    }
}

#[inline]
fn pad_range(k: usize, dim: usize) -> (usize, usize) {
    // Output rows/cols for which input index y + k - 1 stays in [0, dim).
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { dim - 1 } else { dim };
    (lo, hi)
}

/// 2x2 stride-2 max pool, dropping odd edges. Returns pooled values and the
/// flat input index of each maximum (first in scan order on ties).
fn maxpool2(input: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = vec![0.0; planes * ph * pw];
    let mut idx = vec![0usize; planes * ph * pw];
    for p in 0..planes {
        let ib = p * h * w;
        let ob = p * ph * pw;
        for py in 0..ph {
            for px in 0..pw {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = ib + (py * 2 + dy) * w + px * 2 + dx;
                        if input[i] > best {
                            best = input[i];
                            best_i = i;
                        }
                    }
                }
                out[ob + py * pw + px] = best;
                idx[ob + py * pw + px] = best_i;
            }
        }
    }
    (out, idx)
}

/// Gradients of a 3x3 same-padding conv. `wgrad_and_bgrad` is the slice
/// [weight grads .. bias grads] for this layer.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
fn conv_backward(
    input: &[f64],
    dout: &[f64],
    weights: &[f64],
    wgrad_and_bgrad: &mut [f64],
    mut dinput: Option<&mut Vec<f64>>,
    n: usize,
    ic: usize,
    oc: usize,
    h: usize,
    w: usize,
) {
    let (wgrad, bgrad) = wgrad_and_bgrad.split_at_mut(oc * ic * 9);
    for ni in 0..n {
        for o in 0..oc {
            let ob = ((ni * oc) + o) * h * w;
            bgrad[o] += dout[ob..ob + h * w].iter().sum::<f64>();
            for i in 0..ic {
                let ib = ((ni * ic) + i) * h * w;
                let wb = (o * ic + i) * 9;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let (y0, y1) = pad_range(ky, h);
                        let (x0, x1) = pad_range(kx, w);
                        let mut acc = 0.0;
                        let wv = weights[wb + ky * 3 + kx];
                        for y in y0..y1 {
                            let orow = ob + y * w;
                            let irow = ib + (y + ky - 1) * w;
                            for x in x0..x1 {
                                let d = dout[orow + x];
                                acc += d * input[irow + x + kx - 1];
                                if let Some(din) = dinput.as_deref_mut() {
                                    din[irow + x + kx - 1] += wv * d;
                                }
                            }
                        }
                        wgrad[wb + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
}

/// SGD with momentum; weight decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub velocity: Vec<f64>,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
}

impl OptimState {
    pub fn new(param_count: usize, base_lr: f64, momentum: f64, weight_decay: f64, label_smoothing: f64) -> Self {
        OptimState {
            velocity: vec![0.0; param_count],
            base_lr,
            momentum,
            weight_decay,
            label_smoothing,
        }
    }
}

/// v <- mu*v + g + wd*theta; theta <- theta - lr*v.
pub fn sgd_step(model: &mut Model, optim: &mut OptimState, grad: &[f64], lr: f64) {
    assert_eq!(grad.len(), model.params.len());
    for ((theta, v), &g) in model.params.iter_mut().zip(optim.velocity.iter_mut()).zip(grad) {
        *v = optim.momentum * *v + g + optim.weight_decay * *theta;
        *theta -= lr * *v;
    }
}

/// Linear warmup then cosine annealing to zero, stepped per weight update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub iters_per_epoch: usize,
    pub base_lr: f64,
}

impl LrSchedule {
    pub fn lr_at(&self, global_iter: u64) -> f64 {
        let warmup = (self.warmup_epochs * self.iters_per_epoch) as u64;
        let total = (self.total_epochs * self.iters_per_epoch) as u64;
        if global_iter < warmup {
            return self.base_lr * global_iter as f64 / warmup as f64;
        }
        let span = total.saturating_sub(warmup).max(1);
        let t = (global_iter - warmup).min(span) as f64 / span as f64;
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// Max relative error between analytic and central-difference gradients over
/// `probes` randomly chosen parameters.
pub fn grad_check(
    model: &Model,
    batch: &InputBatch,
    labels: &[usize],
    smoothing: f64,
    probes: usize,
    rng: &mut Stream,
) -> f64 {
    let (_, analytic) = model.loss_and_grad(batch, labels, smoothing).unwrap();
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut m = model.clone();
    for _ in 0..probes {
        let i = rng.next_below(m.params.len() as u64) as usize;
        let orig = m.params[i];
        m.params[i] = orig + step;
        let (lp, _) = m.loss_and_grad(batch, labels, smoothing).unwrap();
        m.params[i] = orig - step;
        let (lm, _) = m.loss_and_grad(batch, labels, smoothing).unwrap();
        m.params[i] = orig;
        let fd = (lp - lm) / (2.0 * step);
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
