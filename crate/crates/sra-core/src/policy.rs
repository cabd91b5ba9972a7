//! Sub-policy construction for exploration, refinement, and RA baselines.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::ops::{apply_op, OpApplication, OpKind, ALL_OPS, DEFAULT_FILL};
use crate::rng::Stream;

// Kind/sign draws and magnitude draws live on disjoint sub-streams so that
// explore and refine are comparable under one seed.
const SUBSTREAM_KINDS: u64 = 0;
const SUBSTREAM_MAGS: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub depth: usize,
    pub operator_subset: Vec<OpKind>,
    pub fill: [u8; 3],
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { depth: 2, operator_subset: ALL_OPS.to_vec(), fill: DEFAULT_FILL }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Contract("policy depth must be >= 1".into()));
        }
        if self.operator_subset.is_empty() {
            return Err(Error::Contract("operator subset must be nonempty".into()));
        }
        Ok(())
    }
}

/// Ordered list of exactly `depth` operator applications for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPolicy {
    pub apps: Vec<OpApplication>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaBaselineConfig {
    pub n_ops: usize,
    /// Magnitude level M on the conventional 0..30 scale.
    pub magnitude_level: f64,
    /// Standard deviation of M; 0 is plain RA.
    pub magnitude_std: f64,
}

impl Default for RaBaselineConfig {
    fn default() -> Self {
        RaBaselineConfig { n_ops: 2, magnitude_level: 9.0, magnitude_std: 0.0 }
    }
}

fn sample_kind_and_sign(cfg: &PolicyConfig, kinds: &mut Stream) -> (OpKind, i8) {
    let kind = cfg.operator_subset[kinds.next_below(cfg.operator_subset.len() as u64) as usize];
    let sign = if kinds.next_bool() { 1 } else { -1 };
    (kind, sign)
}

/// Step 1 policy: uniform kinds with replacement, U(0,1) magnitudes,
/// Bernoulli(1/2) signs.
pub fn sample_explore(cfg: &PolicyConfig, rng: &Stream) -> SubPolicy {
    let mut kinds = rng.fork(SUBSTREAM_KINDS);
    let mut mags = rng.fork(SUBSTREAM_MAGS);
    let apps = (0..cfg.depth)
        .map(|_| {
            let (kind, sign) = sample_kind_and_sign(cfg, &mut kinds);
            OpApplication::new(kind, mags.next_f64(), sign, cfg.fill)
        })
        .collect();
    SubPolicy { apps }
}

/// Step 3 policy: kinds and signs as in explore; the sample's MIS is shared
/// by every operator in the sub-policy as its magnitude.
pub fn sample_refine(cfg: &PolicyConfig, mis: f64, rng: &Stream) -> Result<SubPolicy> {
    if !(0.0..=1.0).contains(&mis) {
        return Err(Error::Contract(format!("mis {mis} outside [0,1]")));
    }
    let mut kinds = rng.fork(SUBSTREAM_KINDS);
    let apps = (0..cfg.depth)
        .map(|_| {
            let (kind, sign) = sample_kind_and_sign(cfg, &mut kinds);
            OpApplication::new(kind, mis, sign, cfg.fill)
        })
        .collect();
    Ok(SubPolicy { apps })
}

/// RandAugment baseline: N uniform kinds, magnitude (M + sigma*z)/30 clamped
/// to [0,1], drawn per operator.
pub fn sample_ra_baseline(cfg: &RaBaselineConfig, policy: &PolicyConfig, rng: &Stream) -> SubPolicy {
    let mut kinds = rng.fork(SUBSTREAM_KINDS);
    let mut mags = rng.fork(SUBSTREAM_MAGS);
    let apps = (0..cfg.n_ops)
        .map(|_| {
            let (kind, sign) = sample_kind_and_sign(policy, &mut kinds);
            let z = if cfg.magnitude_std > 0.0 { mags.next_normal() } else { 0.0 };
            let m = ((cfg.magnitude_level + cfg.magnitude_std * z) / 30.0).clamp(0.0, 1.0);
            OpApplication::new(kind, m, sign, policy.fill)
        })
        .collect();
    SubPolicy { apps }
}

/// Apply the sub-policy's operators in order.
pub fn augment_image(img: &Image, sub: &SubPolicy) -> Result<Image> {
    let mut cur = img.clone();
    for app in &sub.apps {
        cur = apply_op(&cur, app)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Purpose};

    fn stream(seed: u64) -> Stream {
        derive_stream(seed, 0, 0, 0, Purpose::ExplorePolicy)
    }

    fn noise_image(seed: u64, w: usize, h: usize) -> Image {
        let mut s = derive_stream(seed, 1, 0, 0, Purpose::Synth);
        Image::new(w, h, (0..w * h * 3).map(|_| s.next_below(256) as u8).collect())
    }

    #[test]
    fn explore_length_matches_depth() {
        let cfg = PolicyConfig { depth: 2, ..Default::default() };
        assert_eq!(sample_explore(&cfg, &stream(1)).apps.len(), 2);
        let cfg5 = PolicyConfig { depth: 5, ..Default::default() };
        assert_eq!(sample_explore(&cfg5, &stream(1)).apps.len(), 5);
    }

    #[test]
    fn explore_is_deterministic_in_the_stream() {
        let cfg = PolicyConfig::default();
        assert_eq!(sample_explore(&cfg, &stream(7)), sample_explore(&cfg, &stream(7)));
        assert_ne!(sample_explore(&cfg, &stream(7)), sample_explore(&cfg, &stream(8)));
    }

    #[test]
    fn explore_kind_frequencies_are_uniform() {
        let cfg = PolicyConfig::default();
        let n = 14_000usize;
        let mut counts = [[0usize; 14]; 2];
        for i in 0..n {
            let sub = sample_explore(&cfg, &stream(i as u64));
            for (slot, app) in sub.apps.iter().enumerate() {
                let idx = ALL_OPS.iter().position(|&k| k == app.kind).unwrap();
                counts[slot][idx] += 1;
            }
        }
        for (slot, slot_counts) in counts.iter().enumerate() {
            for (idx, &c) in slot_counts.iter().enumerate() {
                let freq = c as f64 / n as f64;
                assert!(
                    (freq - 1.0 / 14.0).abs() <= 0.01,
                    "slot {slot} kind {idx}: freq {freq}"
                );
            }
        }
    }

    #[test]
    fn refine_shares_the_mis_magnitude() {
        let cfg = PolicyConfig { depth: 3, ..Default::default() };
        let sub = sample_refine(&cfg, 0.37, &stream(2)).unwrap();
        assert_eq!(sub.apps.len(), 3);
        for app in &sub.apps {
            assert_eq!(app.magnitude, 0.37);
        }
    }

    #[test]
    fn refine_rejects_out_of_range_mis() {
        let cfg = PolicyConfig::default();
        assert!(sample_refine(&cfg, 1.5, &stream(2)).is_err());
        assert!(sample_refine(&cfg, -0.01, &stream(2)).is_err());
    }

    #[test]
    fn refine_kinds_match_explore_kinds_under_one_stream() {
        // Kind draws consume a sub-stream independent of the magnitudes.
        let cfg = PolicyConfig { depth: 4, ..Default::default() };
        let s = stream(11);
        let explore = sample_explore(&cfg, &s);
        for mis in [0.0, 0.4, 0.9] {
            let refine = sample_refine(&cfg, mis, &s).unwrap();
            for (e, r) in explore.apps.iter().zip(&refine.apps) {
                assert_eq!(e.kind, r.kind);
                assert_eq!(e.sign, r.sign);
                assert_eq!(r.magnitude, mis);
            }
        }
    }

    #[test]
    fn ra_baseline_constant_magnitude_without_std() {
        let policy = PolicyConfig::default();
        let ra = RaBaselineConfig { n_ops: 2, magnitude_level: 9.0, magnitude_std: 0.0 };
        let sub = sample_ra_baseline(&ra, &policy, &stream(3));
        assert_eq!(sub.apps.len(), 2);
        for app in &sub.apps {
            assert_eq!(app.magnitude, 0.3);
        }
        let ra30 = RaBaselineConfig { magnitude_level: 30.0, ..ra };
        for app in &sample_ra_baseline(&ra30, &policy, &stream(3)).apps {
            assert_eq!(app.magnitude, 1.0);
        }
    }

    #[test]
    fn ra_baseline_std_keeps_mean_and_rarely_clamps() {
        let policy = PolicyConfig::default();
        let ra = RaBaselineConfig { n_ops: 2, magnitude_level: 9.0, magnitude_std: 0.5 };
        let mut sum = 0.0;
        let mut clamped = 0usize;
        let n = 10_000usize;
        for i in 0..n {
            let sub = sample_ra_baseline(&ra, &policy, &stream(i as u64));
            for app in &sub.apps {
                sum += app.magnitude;
                if app.magnitude == 0.0 || app.magnitude == 1.0 {
                    clamped += 1;
                }
            }
        }
        let mean = sum / (2 * n) as f64;
        assert!((mean - 0.3).abs() <= 0.005, "mean {mean}");
        assert_eq!(clamped, 0, "sigma 0.5/30 never reaches the clamp in 20k draws");
    }

    #[test]
    fn identity_subpolicy_leaves_image_unchanged() {
        let img = noise_image(1, 12, 12);
        let sub = SubPolicy {
            apps: vec![
                OpApplication::new(OpKind::Identity, 0.5, 1, DEFAULT_FILL),
                OpApplication::new(OpKind::Identity, 0.9, -1, DEFAULT_FILL),
            ],
        };
        assert_eq!(augment_image(&img, &sub).unwrap(), img);
    }

    #[test]
    fn operator_order_matters() {
        let img = noise_image(2, 16, 16);
        let rotate = OpApplication::new(OpKind::Rotate, 1.0, 1, DEFAULT_FILL);
        let solarize = OpApplication::new(OpKind::Solarize, 1.0, 1, DEFAULT_FILL);
        let ab = augment_image(&img, &SubPolicy { apps: vec![rotate, solarize] }).unwrap();
        let ba = augment_image(&img, &SubPolicy { apps: vec![solarize, rotate] }).unwrap();
        assert_ne!(ab, ba);
    }

    #[test]
    fn depth_one_equals_direct_apply() {
        let img = noise_image(3, 10, 10);
        let app = OpApplication::new(OpKind::Solarize, 0.6, 1, DEFAULT_FILL);
        let via_policy = augment_image(&img, &SubPolicy { apps: vec![app] }).unwrap();
        assert_eq!(via_policy, apply_op(&img, &app).unwrap());
    }

    #[test]
    fn identity_only_subset_reproduces_input() {
        let cfg = PolicyConfig {
            depth: 2,
            operator_subset: vec![OpKind::Identity],
            fill: DEFAULT_FILL,
        };
        let img = noise_image(4, 8, 8);
        for seed in 0..20 {
            let sub = sample_explore(&cfg, &stream(seed));
            assert_eq!(augment_image(&img, &sub).unwrap(), img);
        }
    }
}
