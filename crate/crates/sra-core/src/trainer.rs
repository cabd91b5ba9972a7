//! The asymmetric explore/refine training loop, its ablation variants,
//! batch-repeat expansion, evaluation, and metrics emission.
//!
//! Each large batch of 2B samples is split down the middle. The first half is
//! augmented with random magnitudes and used for a weight update; the second
//! half is scored (forward only) with the just-updated weights, augmented with
//! each sample's own score as the shared magnitude, and used for a second
//! update. The learning rate steps once per weight update.

use rayon::prelude::*;

use crate::dataset::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mis::{compute_mis, MisConfig, ScorerKind};
use crate::model::{
    normalize_batch, sgd_step, Architecture, LrSchedule, Model, Normalization, OptimState,
};
use crate::policy::{
    augment_image, sample_explore, sample_ra_baseline, sample_refine, PolicyConfig,
    RaBaselineConfig, SubPolicy,
};
use crate::rng::{derive_stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Sra,
    RaBaseline,
    Basic,
    /// Table-12 style variants.
    NoExploreRandom,
    AllExplore,
    AllRefine,
    OneBatch,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Sra => "sra",
            TrainMode::RaBaseline => "ra_baseline",
            TrainMode::Basic => "basic",
            TrainMode::NoExploreRandom => "no_explore_random",
            TrainMode::AllExplore => "all_explore",
            TrainMode::AllRefine => "all_refine",
            TrainMode::OneBatch => "one_batch",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            TrainMode::Sra,
            TrainMode::RaBaseline,
            TrainMode::Basic,
            TrainMode::NoExploreRandom,
            TrainMode::AllExplore,
            TrainMode::AllRefine,
            TrainMode::OneBatch,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }

    fn splits_batch(self) -> bool {
        !matches!(self, TrainMode::OneBatch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub policy: PolicyConfig,
    pub ra: RaBaselineConfig,
    pub scorer: ScorerKind,
    pub epsilon: f64,
    pub epochs: usize,
    /// 2B: the large batch split into two sub-batches of B.
    pub large_batch_size: usize,
    /// Batch Augment repetition K.
    pub repeat_factor: usize,
    pub seed: u64,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub warmup_epochs: usize,
    pub eval_every: usize,
    pub threads: usize,
    pub normalization: Normalization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Sra,
            policy: PolicyConfig::default(),
            ra: RaBaselineConfig::default(),
            scorer: ScorerKind::CosineGamma,
            epsilon: 2.0,
            epochs: 30,
            large_batch_size: 128,
            repeat_factor: 1,
            seed: 42,
            base_lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            label_smoothing: 0.0,
            warmup_epochs: 2,
            eval_every: 5,
            threads: 1,
            normalization: Normalization::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.mode.splits_batch() && !self.large_batch_size.is_multiple_of(2) {
            return Err(Error::Contract(format!(
                "large_batch_size {} must be even in {} mode",
                self.large_batch_size,
                self.mode.name()
            )));
        }
        if self.large_batch_size == 0 {
            return Err(Error::Contract("large_batch_size must be >= 2".into()));
        }
        if self.repeat_factor < 1 {
            return Err(Error::Contract("repeat_factor must be >= 1".into()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::Contract(format!("epsilon {} < 0", self.epsilon)));
        }
        if self.warmup_epochs >= self.epochs && self.epochs > 0 {
            return Err(Error::Contract("warmup_epochs must be < epochs".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Contract("label_smoothing must be in [0,1)".into()));
        }
        Ok(())
    }

    pub fn mis_config(&self, class_count: usize) -> MisConfig {
        MisConfig { scorer: self.scorer, epsilon: self.epsilon, class_count }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub optim: OptimState,
    pub schedule: LrSchedule,
    /// Counts weight updates: advances twice per large batch.
    pub global_iter: u64,
    pub epoch: usize,
    pub seed: u64,
    /// Structural probe: number of per-sample MIS evaluations so far.
    pub mis_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub explore_loss: Option<f64>,
    pub refine_loss: Option<f64>,
    pub mean_mis: Option<f64>,
    pub lr: f64,
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,explore_loss,refine_loss,mean_mis,lr,test_acc,seconds";

impl MetricsRecord {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| match v {
            Some(x) => format!("{x:.prec$}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{:.8},{},{:.3}",
            self.epoch,
            opt(self.explore_loss, 6),
            opt(self.refine_loss, 6),
            opt(self.mean_mis, 6),
            self.lr,
            opt(self.test_acc, 4),
            self.seconds
        )
    }
}

pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Per-large-batch accumulation returned by the iteration functions.
#[derive(Debug, Clone, Default)]
pub struct IterStats {
    pub explore_loss: Option<f64>,
    pub refine_loss: Option<f64>,
    pub mis_sum: f64,
    pub mis_count: usize,
}

/// Repeat each sample K times, copies contiguous, labels duplicated.
pub fn batch_augment_expand(batch: &[LabeledImage], k: usize) -> Vec<LabeledImage> {
    assert!(k >= 1);
    let mut out = Vec::with_capacity(batch.len() * k);
    for s in batch {
        for _ in 0..k {
            out.push(s.clone());
        }
    }
    out
}

enum AugSpec {
    Raw,
    Explore,
    Refine(f64),
    Ra,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub state: TrainState,
    class_count: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, class_count: usize, updates_per_epoch: usize) -> Result<Trainer> {
        cfg.validate()?;
        if updates_per_epoch == 0 {
            return Err(Error::Config(
                "dataset smaller than one large batch: no updates per epoch".into(),
            ));
        }
        let mut init_rng = derive_stream(cfg.seed, 0, 0, 0, Purpose::ModelInit);
        let model = Model::init(Architecture::tiny(class_count), &mut init_rng);
        let optim = OptimState::new(
            model.params.len(),
            cfg.base_lr,
            cfg.momentum,
            cfg.weight_decay,
            cfg.label_smoothing,
        );
        let schedule = LrSchedule {
            warmup_epochs: cfg.warmup_epochs,
            total_epochs: cfg.epochs.max(1),
            iters_per_epoch: updates_per_epoch,
            base_lr: cfg.base_lr,
        };
        let pool = if cfg.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        let seed = cfg.seed;
        Ok(Trainer {
            cfg,
            state: TrainState {
                model,
                optim,
                schedule,
                global_iter: 0,
                epoch: 0,
                seed,
                mis_calls: 0,
            },
            class_count,
            pool,
        })
    }

    /// Augment one sub-batch with K-fold expansion. `base_index` is the
    /// sample's position within the large batch, which keys its RNG streams.
    fn augment_expanded(
        &self,
        batch: &[&LabeledImage],
        specs: &[AugSpec],
        epoch: usize,
        batch_idx: usize,
        purpose: Purpose,
        base_index: usize,
    ) -> Result<(Vec<Image>, Vec<usize>)> {
        let k = self.cfg.repeat_factor;
        let jobs: Vec<(usize, usize)> = (0..batch.len() * k)
            .map(|flat| (flat / k, flat))
            .collect();
        let run = |(orig, flat): &(usize, usize)| -> Result<Image> {
            let sample = batch[*orig];
            let stream = derive_stream(
                self.cfg.seed,
                epoch as u64,
                batch_idx as u64,
                (base_index * k + flat) as u64,
                purpose,
            );
            let sub: SubPolicy = match &specs[*orig] {
                AugSpec::Raw => return Ok(sample.image.clone()),
                AugSpec::Explore => sample_explore(&self.cfg.policy, &stream),
                AugSpec::Refine(mis) => sample_refine(&self.cfg.policy, *mis, &stream)?,
                AugSpec::Ra => sample_ra_baseline(&self.cfg.ra, &self.cfg.policy, &stream),
            };
            augment_image(&sample.image, &sub)
        };
        let images: Vec<Image> = match &self.pool {
            Some(pool) => pool.install(|| jobs.par_iter().map(run).collect::<Result<_>>())?,
            None => jobs.iter().map(run).collect::<Result<_>>()?,
        };
        let labels = jobs.iter().map(|&(orig, _)| batch[orig].label).collect();
        Ok((images, labels))
    }

    /// One weight update on an already-augmented batch. Steps the schedule.
    fn update(&mut self, images: &[Image], labels: &[usize]) -> Result<f64> {
        let refs: Vec<&Image> = images.iter().collect();
        let input = normalize_batch(&refs, &self.cfg.normalization);
        let (loss, grad) =
            self.state
                .model
                .loss_and_grad(&input, labels, self.cfg.label_smoothing)?;
        let lr = self.state.schedule.lr_at(self.state.global_iter);
        sgd_step(&mut self.state.model, &mut self.state.optim, &grad, lr);
        self.state.global_iter += 1;
        Ok(loss)
    }

    /// Step 2: forward-only pass on raw images; one MIS per sample. Never
    /// touches parameters or optimizer state.
    pub fn score_batch(&mut self, batch: &[&LabeledImage]) -> Result<Vec<f64>> {
        let refs: Vec<&Image> = batch.iter().map(|s| &s.image).collect();
        let input = normalize_batch(&refs, &self.cfg.normalization);
        let logits = self.state.model.forward(&input);
        let mis_cfg = self.cfg.mis_config(self.class_count);
        let c = self.class_count;
        let mut scores = Vec::with_capacity(batch.len());
        for (i, s) in batch.iter().enumerate() {
            scores.push(compute_mis(&logits[i * c..(i + 1) * c], s.label, &mis_cfg)?);
            self.state.mis_calls += 1;
        }
        Ok(scores)
    }

    fn explore_update(
        &mut self,
        half: &[&LabeledImage],
        epoch: usize,
        batch_idx: usize,
        base_index: usize,
        spec: AugSpec,
    ) -> Result<f64> {
        let specs: Vec<AugSpec> = half
            .iter()
            .map(|_| match spec {
                AugSpec::Raw => AugSpec::Raw,
                AugSpec::Explore => AugSpec::Explore,
                AugSpec::Ra => AugSpec::Ra,
                AugSpec::Refine(_) => unreachable!(),
            })
            .collect();
        let purpose = match spec {
            AugSpec::Ra => Purpose::RaPolicy,
            _ => Purpose::ExplorePolicy,
        };
        let (images, labels) =
            self.augment_expanded(half, &specs, epoch, batch_idx, purpose, base_index)?;
        self.update(&images, &labels)
    }

    /// Steps 2 + 3 on one sub-batch: score raw samples, refine-augment with
    /// shared per-sample magnitudes, update.
    fn refine_update(
        &mut self,
        half: &[&LabeledImage],
        epoch: usize,
        batch_idx: usize,
        base_index: usize,
        stats: &mut IterStats,
    ) -> Result<f64> {
        let scores = self.score_batch(half)?;
        stats.mis_sum += scores.iter().sum::<f64>();
        stats.mis_count += scores.len();
        let specs: Vec<AugSpec> = scores.iter().map(|&m| AugSpec::Refine(m)).collect();
        let (images, labels) =
            self.augment_expanded(half, &specs, epoch, batch_idx, Purpose::RefinePolicy, base_index)?;
        self.update(&images, &labels)
    }

    /// Run one large batch in the configured mode. Two weight updates.
    pub fn run_large_batch(
        &mut self,
        large: &[LabeledImage],
        epoch: usize,
        batch_idx: usize,
    ) -> Result<IterStats> {
        let mut stats = IterStats::default();
        let all: Vec<&LabeledImage> = large.iter().collect();
        if self.cfg.mode == TrainMode::OneBatch {
            stats.explore_loss =
                Some(self.explore_update(&all, epoch, batch_idx, 0, AugSpec::Explore)?);
            stats.refine_loss = Some(self.refine_update(&all, epoch, batch_idx, 0, &mut stats)?);
            return Ok(stats);
        }
        if !large.len().is_multiple_of(2) {
            return Err(Error::Contract("odd large batch".into()));
        }
        let half = large.len() / 2;
        let (b1, b2) = all.split_at(half);
        match self.cfg.mode {
            TrainMode::Sra => {
                stats.explore_loss =
                    Some(self.explore_update(b1, epoch, batch_idx, 0, AugSpec::Explore)?);
                stats.refine_loss =
                    Some(self.refine_update(b2, epoch, batch_idx, half, &mut stats)?);
            }
            TrainMode::NoExploreRandom => {
                stats.explore_loss =
                    Some(self.explore_update(b1, epoch, batch_idx, 0, AugSpec::Raw)?);
                stats.refine_loss =
                    Some(self.refine_update(b2, epoch, batch_idx, half, &mut stats)?);
            }
            TrainMode::AllRefine => {
                let l1 = self.refine_update(b1, epoch, batch_idx, 0, &mut stats)?;
                let l2 = self.refine_update(b2, epoch, batch_idx, half, &mut stats)?;
                stats.refine_loss = Some((l1 + l2) / 2.0);
            }
            TrainMode::AllExplore | TrainMode::Basic => {
                let l1 = self.explore_update(b1, epoch, batch_idx, 0, AugSpec::Explore)?;
                let l2 = self.explore_update(b2, epoch, batch_idx, half, AugSpec::Explore)?;
                stats.explore_loss = Some((l1 + l2) / 2.0);
            }
            TrainMode::RaBaseline => {
                let l1 = self.explore_update(b1, epoch, batch_idx, 0, AugSpec::Ra)?;
                let l2 = self.explore_update(b2, epoch, batch_idx, half, AugSpec::Ra)?;
                stats.explore_loss = Some((l1 + l2) / 2.0);
            }
            TrainMode::OneBatch => unreachable!(),
        }
        Ok(stats)
    }
}

/// Argmax accuracy on raw (un-augmented) images; ties go to the lowest class.
pub fn evaluate(model: &Model, dataset: &Dataset, norm: &Normalization) -> f64 {
    let c = model.arch.classes;
    let mut correct = 0usize;
    for chunk in dataset.samples.chunks(256) {
        let refs: Vec<&Image> = chunk.iter().map(|s| &s.image).collect();
        let logits = model.forward(&normalize_batch(&refs, norm));
        for (i, s) in chunk.iter().enumerate() {
            let row = &logits[i * c..(i + 1) * c];
            let mut best = 0usize;
            for k in 1..c {
                if row[k] > row[best] {
                    best = k;
                }
            }
            if best == s.label {
                correct += 1;
            }
        }
    }
    correct as f64 / dataset.len().max(1) as f64
}

pub struct TrainOutput {
    pub model: Model,
    pub velocity: Vec<f64>,
    pub metrics: Vec<MetricsRecord>,
}

/// Full training run; `on_epoch` fires after each epoch's record is final.
pub fn train_with_callback(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    mut on_epoch: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrainOutput> {
    if train_set.class_count != test_set.class_count {
        return Err(Error::Config(format!(
            "class_count mismatch: train {} vs test {}",
            train_set.class_count, test_set.class_count
        )));
    }
    let batches_per_epoch = train_set.len() / cfg.large_batch_size;
    let updates_per_epoch = if cfg.epochs == 0 { 1 } else { 2 * batches_per_epoch };
    let mut trainer = Trainer::new(cfg.clone(), train_set.class_count, updates_per_epoch.max(1))?;
    if cfg.epochs > 0 && batches_per_epoch == 0 {
        return Err(Error::Config(
            "dataset smaller than one large batch: no updates per epoch".into(),
        ));
    }
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let t0 = std::time::Instant::now();
        trainer.state.epoch = epoch;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = derive_stream(cfg.seed, epoch as u64, 0, 0, Purpose::Shuffle);
        shuffle_rng.shuffle(&mut order);

        let mut explore_sum = 0.0;
        let mut explore_n = 0usize;
        let mut refine_sum = 0.0;
        let mut refine_n = 0usize;
        let mut mis_sum = 0.0;
        let mut mis_n = 0usize;
        let mut last_lr = 0.0;
        // Drop-last partial batch keeps the even-split invariant.
        for (batch_idx, idxs) in order.chunks_exact(cfg.large_batch_size).enumerate() {
            let large: Vec<LabeledImage> =
                idxs.iter().map(|&i| train_set.samples[i].clone()).collect();
            let stats = trainer.run_large_batch(&large, epoch, batch_idx)?;
            if let Some(l) = stats.explore_loss {
                explore_sum += l;
                explore_n += 1;
            }
            if let Some(l) = stats.refine_loss {
                refine_sum += l;
                refine_n += 1;
            }
            mis_sum += stats.mis_sum;
            mis_n += stats.mis_count;
            last_lr = trainer
                .state
                .schedule
                .lr_at(trainer.state.global_iter.saturating_sub(1));
        }
        let eval_due = (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)
            || epoch + 1 == cfg.epochs;
        let test_acc = eval_due
            .then(|| evaluate(&trainer.state.model, test_set, &cfg.normalization));
        let record = MetricsRecord {
            epoch,
            explore_loss: (explore_n > 0).then(|| explore_sum / explore_n as f64),
            refine_loss: (refine_n > 0).then(|| refine_sum / refine_n as f64),
            mean_mis: (mis_n > 0).then(|| mis_sum / mis_n as f64),
            lr: last_lr,
            test_acc,
            seconds: t0.elapsed().as_secs_f64(),
        };
        on_epoch(&record)?;
        metrics.push(record);
    }
    Ok(TrainOutput {
        model: trainer.state.model,
        velocity: trainer.state.optim.velocity,
        metrics,
    })
}

pub fn train(cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset) -> Result<TrainOutput> {
    train_with_callback(cfg, train_set, test_set, |_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize_dataset, Split};
    use crate::ops::OpKind;

    fn small_sets(classes: usize) -> (Dataset, Dataset) {
        let tr = synthesize_dataset(7, classes, 16, 16, Split::Train).unwrap();
        let te = synthesize_dataset(7, classes, 4, 16, Split::Test).unwrap();
        (tr, te)
    }

    fn quick_cfg(mode: TrainMode) -> TrainConfig {
        TrainConfig {
            mode,
            epochs: 2,
            large_batch_size: 16,
            warmup_epochs: 1,
            eval_every: 1,
            ..Default::default()
        }
    }

    fn param_checksum(model: &Model) -> u64 {
        model
            .params
            .iter()
            .fold(0u64, |acc, p| acc.wrapping_mul(31).wrapping_add(p.to_bits()))
    }

    #[test]
    fn sra_iteration_advances_global_iter_by_two() {
        let (tr, _) = small_sets(4);
        let mut t = Trainer::new(quick_cfg(TrainMode::Sra), 4, 4).unwrap();
        let large: Vec<LabeledImage> = tr.samples[0..16].to_vec();
        for i in 0..3 {
            t.run_large_batch(&large, 0, i).unwrap();
            assert_eq!(t.state.global_iter, 2 * (i as u64 + 1));
        }
    }

    #[test]
    fn odd_large_batch_rejected() {
        let (tr, _) = small_sets(4);
        let mut t = Trainer::new(quick_cfg(TrainMode::Sra), 4, 4).unwrap();
        let large: Vec<LabeledImage> = tr.samples[0..15].to_vec();
        assert!(t.run_large_batch(&large, 0, 0).is_err());
    }

    #[test]
    fn identity_subset_first_losses_are_ln_c() {
        let (tr, _) = small_sets(4);
        let cfg = TrainConfig {
            policy: PolicyConfig {
                operator_subset: vec![OpKind::Identity],
                ..Default::default()
            },
            base_lr: 0.0, // keep the model at init across both steps
            ..quick_cfg(TrainMode::Sra)
        };
        let mut t = Trainer::new(cfg, 4, 4).unwrap();
        // Zero the final layer so logits are uniform.
        let wf_start = t.state.model.params.len() - (4 * 32 + 4);
        for p in t.state.model.params[wf_start..].iter_mut() {
            *p = 0.0;
        }
        let large: Vec<LabeledImage> = tr.samples[0..16].to_vec();
        let stats = t.run_large_batch(&large, 0, 0).unwrap();
        let ln_c = 4f64.ln();
        assert!((stats.explore_loss.unwrap() - ln_c).abs() < 1e-3);
        assert!((stats.refine_loss.unwrap() - ln_c).abs() < 1e-3);
    }

    #[test]
    fn scoring_pass_is_parameter_neutral() {
        let (tr, _) = small_sets(4);
        let mut t = Trainer::new(quick_cfg(TrainMode::Sra), 4, 4).unwrap();
        let before = param_checksum(&t.state.model);
        let vel_before = t.state.optim.velocity.clone();
        let refs: Vec<&LabeledImage> = tr.samples[0..8].iter().collect();
        t.score_batch(&refs).unwrap();
        assert_eq!(param_checksum(&t.state.model), before);
        assert_eq!(t.state.optim.velocity, vel_before);
    }

    #[test]
    fn all_explore_never_scores() {
        let (tr, te) = small_sets(4);
        let cfg = quick_cfg(TrainMode::AllExplore);
        // Run through the full loop and inspect the probe via a manual trainer.
        let mut t = Trainer::new(cfg, 4, 4).unwrap();
        let large: Vec<LabeledImage> = tr.samples[0..16].to_vec();
        for i in 0..4 {
            t.run_large_batch(&large, 0, i).unwrap();
        }
        assert_eq!(t.state.mis_calls, 0);
        drop(te);
    }

    #[test]
    fn all_refine_scores_every_sample() {
        let (tr, _) = small_sets(4);
        let mut t = Trainer::new(quick_cfg(TrainMode::AllRefine), 4, 4).unwrap();
        let large: Vec<LabeledImage> = tr.samples[0..16].to_vec();
        t.run_large_batch(&large, 0, 0).unwrap();
        assert_eq!(t.state.mis_calls, 16);
    }

    #[test]
    fn sra_scores_only_the_second_half() {
        let (tr, _) = small_sets(4);
        let mut t = Trainer::new(quick_cfg(TrainMode::Sra), 4, 4).unwrap();
        let large: Vec<LabeledImage> = tr.samples[0..16].to_vec();
        t.run_large_batch(&large, 0, 0).unwrap();
        assert_eq!(t.state.mis_calls, 8);
    }

    #[test]
    fn one_batch_mode_two_updates_full_width() {
        let (tr, _) = small_sets(4);
        let mut t = Trainer::new(quick_cfg(TrainMode::OneBatch), 4, 4).unwrap();
        let large: Vec<LabeledImage> = tr.samples[0..16].to_vec();
        let stats = t.run_large_batch(&large, 0, 0).unwrap();
        assert_eq!(t.state.global_iter, 2);
        assert_eq!(t.state.mis_calls, 16, "scores the whole batch");
        assert!(stats.explore_loss.is_some() && stats.refine_loss.is_some());
    }

    #[test]
    fn expand_duplicates_contiguously() {
        let (tr, _) = small_sets(4);
        let batch: Vec<LabeledImage> = tr.samples[0..16].to_vec();
        assert_eq!(batch_augment_expand(&batch, 1), batch);
        let expanded = batch_augment_expand(&batch, 8);
        assert_eq!(expanded.len(), 128);
        for (i, s) in expanded.iter().enumerate() {
            assert_eq!(s.label, batch[i / 8].label);
            assert_eq!(s.image, batch[i / 8].image);
        }
    }

    #[test]
    fn repeat_copies_are_distinct_under_full_operator_set() {
        let (tr, _) = small_sets(4);
        let cfg = TrainConfig { repeat_factor: 8, ..quick_cfg(TrainMode::Sra) };
        let t = Trainer::new(cfg, 4, 4).unwrap();
        let refs: Vec<&LabeledImage> = tr.samples[0..4].iter().collect();
        let specs: Vec<AugSpec> = refs.iter().map(|_| AugSpec::Explore).collect();
        let (images, labels) = t
            .augment_expanded(&refs, &specs, 0, 0, Purpose::ExplorePolicy, 0)
            .unwrap();
        assert_eq!(images.len(), 32);
        assert_eq!(labels.len(), 32);
        let mut distinct_pairs = 0;
        let mut total_pairs = 0;
        for s in 0..4 {
            for a in 0..8 {
                for b in a + 1..8 {
                    total_pairs += 1;
                    if images[s * 8 + a] != images[s * 8 + b] {
                        distinct_pairs += 1;
                    }
                }
            }
        }
        assert!(
            distinct_pairs as f64 / total_pairs as f64 > 0.99,
            "{distinct_pairs}/{total_pairs} distinct"
        );
    }

    #[test]
    fn refine_copies_share_magnitude() {
        let cfg = TrainConfig { repeat_factor: 4, ..quick_cfg(TrainMode::Sra) };
        let t = Trainer::new(cfg, 4, 4).unwrap();
        // Reconstruct the sub-policies the trainer would draw for one sample
        // and check the shared-magnitude / independent-kinds structure.
        let mis = 0.42;
        let subs: Vec<SubPolicy> = (0..4)
            .map(|k| {
                let stream = derive_stream(t.cfg.seed, 0, 0, k, Purpose::RefinePolicy);
                sample_refine(&t.cfg.policy, mis, &stream).unwrap()
            })
            .collect();
        for sub in &subs {
            for app in &sub.apps {
                assert_eq!(app.magnitude, mis);
            }
        }
        let kinds: Vec<Vec<OpKind>> = subs
            .iter()
            .map(|s| s.apps.iter().map(|a| a.kind).collect())
            .collect();
        assert!(kinds.iter().any(|k| k != &kinds[0]), "kinds vary across copies");
    }

    #[test]
    fn zero_epochs_yields_initial_checkpoint_and_empty_metrics() {
        let (tr, te) = small_sets(4);
        let cfg = TrainConfig { epochs: 0, warmup_epochs: 0, ..quick_cfg(TrainMode::Sra) };
        let out = train(&cfg, &tr, &te).unwrap();
        assert!(out.metrics.is_empty());
        let mut rng = derive_stream(cfg.seed, 0, 0, 0, Purpose::ModelInit);
        let fresh = Model::init(Architecture::tiny(4), &mut rng);
        assert_eq!(out.model.params, fresh.params);
    }

    #[test]
    fn class_count_mismatch_rejected() {
        let tr = synthesize_dataset(1, 4, 8, 16, Split::Train).unwrap();
        let te = synthesize_dataset(1, 3, 8, 16, Split::Test).unwrap();
        assert!(matches!(
            train(&quick_cfg(TrainMode::Sra), &tr, &te),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn training_is_deterministic_across_runs_and_threads() {
        let (tr, te) = small_sets(4);
        let run = |threads: usize| {
            let cfg = TrainConfig { threads, ..quick_cfg(TrainMode::Sra) };
            let out = train(&cfg, &tr, &te).unwrap();
            (out.model.params, strip_seconds(&metrics_to_csv(&out.metrics)))
        };
        let a = run(1);
        let b = run(1);
        let c = run(4);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    fn strip_seconds(csv: &str) -> String {
        csv.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn update_parity_matches_spec_formula() {
        let (tr, te) = small_sets(4); // 64 train samples
        let cfg = TrainConfig { epochs: 3, ..quick_cfg(TrainMode::Sra) };
        let batches = tr.len() / cfg.large_batch_size;
        let out = train(&cfg, &tr, &te).unwrap();
        assert_eq!(out.metrics.len(), 3);
        // 2 updates per large batch, epochs * batches large batches: verified
        // indirectly through the schedule position in the final record.
        let expected_updates = 2 * batches * cfg.epochs;
        let schedule = LrSchedule {
            warmup_epochs: cfg.warmup_epochs,
            total_epochs: cfg.epochs,
            iters_per_epoch: 2 * batches,
            base_lr: cfg.base_lr,
        };
        let expected_last_lr = schedule.lr_at(expected_updates as u64 - 1);
        assert!((out.metrics.last().unwrap().lr - expected_last_lr).abs() < 1e-12);
    }

    #[test]
    fn evaluate_tie_breaks_toward_class_zero() {
        let (_, te) = small_sets(4);
        let mut rng = derive_stream(5, 0, 0, 0, Purpose::ModelInit);
        let mut model = Model::init(Architecture::tiny(4), &mut rng);
        for p in model.params.iter_mut() {
            *p = 0.0;
        }
        let acc = evaluate(&model, &te, &Normalization::default());
        let class0 = te.samples.iter().filter(|s| s.label == 0).count() as f64;
        assert!((acc - class0 / te.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn evaluate_is_order_invariant() {
        let (tr, mut te) = small_sets(4);
        let mut rng = derive_stream(6, 0, 0, 0, Purpose::ModelInit);
        let model = Model::init(Architecture::tiny(4), &mut rng);
        let a = evaluate(&model, &te, &Normalization::default());
        te.samples.reverse();
        let b = evaluate(&model, &te, &Normalization::default());
        assert_eq!(a, b);
        drop(tr);
    }

    #[test]
    fn basic_identity_mode_matches_plain_sgd_reference() {
        // Basic mode with the Identity-only subset must produce the exact
        // loss trajectory of an augmentation-free SGD loop on the same
        // shuffled half-batches.
        let (tr, te) = small_sets(4);
        let cfg = TrainConfig {
            policy: PolicyConfig {
                operator_subset: vec![OpKind::Identity],
                ..Default::default()
            },
            epochs: 2,
            large_batch_size: 16,
            warmup_epochs: 1,
            eval_every: 10,
            ..quick_cfg(TrainMode::Basic)
        };
        let out = train(&cfg, &tr, &te).unwrap();

        // Reference loop, no policy machinery at all.
        let batches = tr.len() / cfg.large_batch_size;
        let mut rng = derive_stream(cfg.seed, 0, 0, 0, Purpose::ModelInit);
        let mut model = Model::init(Architecture::tiny(4), &mut rng);
        let mut optim = OptimState::new(
            model.params.len(),
            cfg.base_lr,
            cfg.momentum,
            cfg.weight_decay,
            cfg.label_smoothing,
        );
        let schedule = LrSchedule {
            warmup_epochs: cfg.warmup_epochs,
            total_epochs: cfg.epochs,
            iters_per_epoch: 2 * batches,
            base_lr: cfg.base_lr,
        };
        let mut iter = 0u64;
        let mut epoch_losses = Vec::new();
        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..tr.len()).collect();
            derive_stream(cfg.seed, epoch as u64, 0, 0, Purpose::Shuffle).shuffle(&mut order);
            let mut sum = 0.0;
            let mut n = 0;
            for idxs in order.chunks_exact(cfg.large_batch_size) {
                for half in idxs.chunks_exact(cfg.large_batch_size / 2) {
                    let refs: Vec<&Image> =
                        half.iter().map(|&i| &tr.samples[i].image).collect();
                    let labels: Vec<usize> = half.iter().map(|&i| tr.samples[i].label).collect();
                    let input = normalize_batch(&refs, &cfg.normalization);
                    let (loss, grad) = model.loss_and_grad(&input, &labels, 0.0).unwrap();
                    sgd_step(&mut model, &mut optim, &grad, schedule.lr_at(iter));
                    iter += 1;
                    sum += loss;
                    n += 1;
                }
            }
            epoch_losses.push(sum / n as f64);
        }
        assert_eq!(out.model.params, model.params);
        for (rec, reference) in out.metrics.iter().zip(&epoch_losses) {
            // Trainer averages the two half-batch losses per large batch.
            assert!((rec.explore_loss.unwrap() - reference).abs() < 1e-12);
        }
    }
}
