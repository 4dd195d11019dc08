//! Warm-up followed by per-epoch decoupling and pure-batch training, plus the
//! two single-component ablations and the joint-training baseline.

use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, RngCursor};
use crate::data::{Modality, MultimodalDataset, Splits, NUM_MODALITIES};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, angle_from_actual, imbalance_ratio, summarize_angles, AngleProbe, EvalMode, RhoSample};
use crate::model::{FusionKind, LossBreakdown, MaskLevel, ModelConfig, MultimodalModel, UniMode};
use crate::nn::{AdamConfig, AdamState, BiasMode, Parameters};
use crate::record::{AbortDiagnostics, AbortReport, AngleRow, EpochRow, FinalMetrics, MetricRow, RunRecord, RunStatus};
use crate::remix::{build_batch_plan, build_mixed_plan, decouple, BatchPlan, MaskedView, OrderPolicy, Partition};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Joint multimodal training throughout.
    Baseline,
    /// Masks from decoupling, batches drawn across subsets.
    DecoupleOnly,
    /// Pure batches by the decoupling assignment, no masking.
    ReassembleOnly,
    #[default]
    FullRemix,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::DecoupleOnly, Variant::ReassembleOnly, Variant::FullRemix];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::DecoupleOnly => "decouple_only",
            Variant::ReassembleOnly => "reassemble_only",
            Variant::FullRemix => "full_remix",
        }
    }

    pub fn masks(self) -> bool {
        matches!(self, Variant::DecoupleOnly | Variant::FullRemix)
    }

    pub fn pure_batches(self) -> bool {
        matches!(self, Variant::ReassembleOnly | Variant::FullRemix)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "decouple_only" | "decouple" => Ok(Variant::DecoupleOnly),
            "reassemble_only" | "reassemble" => Ok(Variant::ReassembleOnly),
            "full_remix" | "remix" => Ok(Variant::FullRemix),
            other => {
                Err(Error::validation("variant", format!("unknown variant `{other}` (baseline | decouple_only | reassemble_only | full_remix)")))
            }
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub encoder_bias: BiasMode,
    pub mask_level: MaskLevel,
    pub head_weights: [f64; NUM_MODALITIES],
    pub fusion: FusionKind,
    pub uni_mode: UniMode,
    pub order_policy: OrderPolicy,
    pub variant: Variant,
    pub seed: u64,
    /// Evaluate on the validation split every this many epochs (and always
    /// after the last epoch).
    pub eval_cadence: usize,
    /// Recompute the partition every this many remix epochs.
    pub decouple_every: usize,
    pub freeze_heads_after_warmup: bool,
    /// Record actual-vs-ideal gradient angles on every batch of evaluated
    /// epochs.
    pub angle_probes: bool,
    /// Keep a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_epochs: 60,
            warmup_epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
            hidden_dim: 64,
            feature_dim: 32,
            encoder_bias: BiasMode::BiasFree,
            mask_level: MaskLevel::Input,
            head_weights: [1.0; NUM_MODALITIES],
            fusion: FusionKind::Concat,
            uni_mode: UniMode::Head,
            order_policy: OrderPolicy::SequentialBySubset,
            variant: Variant::FullRemix,
            seed: 0,
            eval_cadence: 1,
            decouple_every: 1,
            freeze_heads_after_warmup: false,
            angle_probes: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::validation("warmup_epochs", "must not exceed total_epochs"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if self.eval_cadence == 0 {
            return Err(Error::validation("eval_cadence", "must be at least 1"));
        }
        if self.decouple_every == 0 {
            return Err(Error::validation("decouple_every", "must be at least 1"));
        }
        if self.hidden_dim == 0 || self.feature_dim == 0 {
            return Err(Error::validation("hidden_dim/feature_dim", "must be positive"));
        }
        if self.head_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation("head_weights", "must be finite and non-negative"));
        }
        self.adam.validate()
    }

    pub fn model_config(&self, input_dims: [usize; NUM_MODALITIES], num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_dims,
            num_classes,
            hidden_dim: self.hidden_dim,
            feature_dim: self.feature_dim,
            fusion: self.fusion,
            encoder_bias: self.encoder_bias,
            mask_level: self.mask_level,
            head_weights: self.head_weights,
        }
    }

    fn is_eval_epoch(&self, epoch: usize) -> bool {
        (epoch + 1).is_multiple_of(self.eval_cadence) || epoch + 1 == self.total_epochs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Remix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub phase: Phase,
    pub variant: Variant,
    /// Sample-weighted mean of the batch losses.
    pub loss: LossBreakdown,
    pub samples_seen: usize,
    pub num_batches: usize,
    /// Some sample had a modality masked this epoch.
    pub masks_applied: bool,
    /// Every batch was drawn from a single retained-modality subset.
    pub pure_batches: bool,
    pub retained: Option<Vec<usize>>,
    pub repartitioned: bool,
    pub angles: Vec<(usize, AngleProbe)>,
}

/// What was being processed when training failed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureContext {
    pub epoch: usize,
    pub batch_index: Option<usize>,
    pub batch_ids: Vec<usize>,
    pub last_loss: Option<LossBreakdown>,
}

/// Owns the model and optimiser for one run.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    train: &'a MultimodalDataset,
    pub model: MultimodalModel,
    pub adam: AdamState,
    rng: ChaCha8Rng,
    partition: Option<Partition>,
    failure: FailureContext,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, train: &'a MultimodalDataset) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::validation("train", "training split is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mcfg = cfg.model_config([train.spec.dim_a, train.spec.dim_v], train.num_classes());
        let model = MultimodalModel::new(&mcfg, &mut rng)?;
        let adam = AdamState::new(cfg.adam, model.num_params());
        Ok(Trainer { cfg, train, model, adam, rng, partition: None, failure: FailureContext::default() })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Most recent partition (from decoupling or ablation grouping).
    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn failure_context(&self) -> &FailureContext {
        &self.failure
    }

    pub fn rng_cursor(&self) -> RngCursor {
        RngCursor::capture(self.cfg.seed, &self.rng)
    }

    pub fn checkpoint(&self, epoch: usize) -> Checkpoint {
        Checkpoint::new(epoch, self.model.clone(), self.adam.clone(), self.rng_cursor())
    }

    /// One pass of shuffled mixed batches with every modality live.
    pub fn warmup_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        let seed = self.rng.next_u64();
        let plan = build_mixed_plan(self.train.len(), self.cfg.batch_size, seed)?;
        let view = MaskedView::unmasked(self.train);
        self.train_plan(epoch, Phase::Warmup, Variant::Baseline, &view, &plan)
    }

    /// Decouple, mask, reassemble into pure batches, train.
    pub fn remix_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        self.variant_epoch(epoch, Variant::FullRemix)
    }

    /// `DecoupleOnly` or `ReassembleOnly`.
    pub fn ablation_epoch(&mut self, epoch: usize, variant: Variant) -> Result<EpochStats> {
        if !matches!(variant, Variant::DecoupleOnly | Variant::ReassembleOnly) {
            return Err(Error::validation("variant", format!("{variant} is not an ablation variant")));
        }
        self.variant_epoch(epoch, variant)
    }

    /// Runs epoch `epoch` according to the schedule: warm-up before
    /// `warmup_epochs`, the configured variant afterwards.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        if epoch < self.cfg.warmup_epochs || self.cfg.variant == Variant::Baseline {
            let mut stats = self.warmup_epoch(epoch)?;
            if epoch >= self.cfg.warmup_epochs {
                stats.phase = Phase::Remix;
            }
            Ok(stats)
        } else {
            self.variant_epoch(epoch, self.cfg.variant)
        }
    }

    fn variant_epoch(&mut self, epoch: usize, variant: Variant) -> Result<EpochStats> {
        self.failure = FailureContext { epoch, ..FailureContext::default() };
        let remix_index = epoch.saturating_sub(self.cfg.warmup_epochs);
        let repartition = self.partition.is_none() || remix_index.is_multiple_of(self.cfg.decouple_every);
        if repartition {
            self.partition = Some(decouple(&self.model, self.train, self.cfg.uni_mode, epoch)?);
        }
        let partition = self.partition.take().expect("partition set above");
        let seed = self.rng.next_u64();
        let plan = if variant.pure_batches() {
            build_batch_plan(&partition, self.cfg.batch_size, self.cfg.order_policy, seed)?
        } else {
            build_mixed_plan(self.train.len(), self.cfg.batch_size, seed)?
        };
        let result = if variant.masks() {
            MaskedView::unmasked(self.train).apply(&partition).and_then(|view| self.train_plan(epoch, Phase::Remix, variant, &view, &plan))
        } else {
            let view = MaskedView::unmasked(self.train);
            self.train_plan(epoch, Phase::Remix, variant, &view, &plan)
        };
        let counts = partition.counts();
        self.partition = Some(partition);
        let mut stats = result?;
        stats.retained = Some(counts);
        stats.repartitioned = repartition;
        Ok(stats)
    }

    fn train_plan(&mut self, epoch: usize, phase: Phase, variant: Variant, view: &MaskedView, plan: &BatchPlan) -> Result<EpochStats> {
        self.failure = FailureContext { epoch, ..FailureContext::default() };
        let probe = self.cfg.angle_probes && self.cfg.is_eval_epoch(epoch);
        let freeze_heads = self.cfg.freeze_heads_after_warmup && phase == Phase::Remix;
        let mut loss = LossBreakdown::default();
        let mut seen = 0usize;
        let mut angles = Vec::new();
        let mut masks_applied = false;

        for (bi, batch) in plan.batches.iter().enumerate() {
            self.failure.batch_index = Some(bi);
            self.failure.batch_ids = batch.ids.clone();
            let views = view.batch(&batch.ids)?;
            masks_applied |= views.iter().any(|v| v.masked.iter().any(|&m| m));
            let (l, mut grad) = self.model.gradients(&views)?;
            self.failure.last_loss = Some(l);
            if probe {
                for m in Modality::ALL {
                    angles.push((bi, angle_from_actual(&self.model, &grad, &views, m)?));
                }
            }
            // Adam momentum would still move a zero-gradient head, so restore it.
            let frozen = freeze_heads.then(|| self.model.heads.clone());
            if freeze_heads {
                grad.heads.iter_mut().for_each(|h| h.fill(0.0));
            }
            self.adam.step(&mut self.model, &grad)?;
            if let Some(heads) = frozen {
                self.model.heads = heads;
            }
            if !self.model.all_finite() {
                return Err(Error::NonFiniteLoss { sample_id: batch.ids[0] });
            }
            let n = views.len() as f64;
            loss.total += l.total * n;
            loss.fused += l.fused * n;
            for k in 0..NUM_MODALITIES {
                loss.heads[k] += l.heads[k] * n;
            }
            seen += views.len();
        }
        let denom = seen.max(1) as f64;
        loss.total /= denom;
        loss.fused /= denom;
        loss.heads.iter_mut().for_each(|h| *h /= denom);
        Ok(EpochStats {
            epoch,
            phase,
            variant,
            loss,
            samples_seen: seen,
            num_batches: plan.batches.len(),
            masks_applied,
            pure_batches: plan.is_pure_tagged(),
            retained: None,
            repartitioned: false,
            angles,
        })
    }
}

/// Validation/test metrics at one model state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub acc_multimodal: f64,
    /// `[audio, video]` with head predictions.
    pub acc_head: [f64; NUM_MODALITIES],
    /// `[audio, video]` with zero-masked fused predictions.
    pub acc_zero_mask: [f64; NUM_MODALITIES],
    pub rho: RhoSample,
}

pub fn evaluate(model: &MultimodalModel, ds: &MultimodalDataset, uni_mode: UniMode, epoch: usize) -> Result<Evaluation> {
    let acc = |mode, um| accuracy(model, ds, mode, um);
    let view = MaskedView::unmasked(ds);
    let batch = view.batch(&(0..ds.len()).collect::<Vec<_>>())?;
    Ok(Evaluation {
        acc_multimodal: acc(EvalMode::Multimodal, UniMode::Head)?,
        acc_head: [acc(EvalMode::AudioOnly, UniMode::Head)?, acc(EvalMode::VideoOnly, UniMode::Head)?],
        acc_zero_mask: [acc(EvalMode::AudioOnly, UniMode::ZeroMask)?, acc(EvalMode::VideoOnly, UniMode::ZeroMask)?],
        rho: imbalance_ratio(model, &batch, uni_mode, view.zeros(), epoch)?,
    })
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub model: MultimodalModel,
    pub adam: AdamState,
    pub rng: RngCursor,
    pub partitions: Vec<Partition>,
    pub angles: Vec<AngleRow>,
    pub metrics: Vec<MetricRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub epoch_stats: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn final_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.record.rows.last().map_or(0, |r| r.epoch), self.model.clone(), self.adam.clone(), self.rng.clone())
    }
}

/// Warm-up then the configured variant, with evaluation on the validation
/// split and a final test evaluation.
///
/// A failure mid-run returns [`Error::Aborted`] carrying everything recorded up
/// to that point.
pub fn run_training(cfg: &TrainConfig, splits: &Splits) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mut trainer = Trainer::new(cfg.clone(), &splits.train)?;
    let mut out = TrainOutcome {
        record: RunRecord::new(cfg.clone(), splits.train.spec.clone()),
        model: trainer.model.clone(),
        adam: trainer.adam.clone(),
        rng: trainer.rng_cursor(),
        partitions: Vec::new(),
        angles: Vec::new(),
        metrics: Vec::new(),
        checkpoints: Vec::new(),
        epoch_stats: Vec::new(),
    };

    for epoch in 0..cfg.total_epochs {
        let stats = match trainer.run_epoch(epoch) {
            Ok(s) => s,
            Err(e) => return Err(abort(out, &trainer, e, started)),
        };
        if stats.repartitioned {
            if let Some(p) = trainer.partition() {
                out.partitions.push(p.clone());
            }
        }
        if cfg.is_eval_epoch(epoch) {
            let eval = match evaluate(&trainer.model, &splits.val, cfg.uni_mode, epoch) {
                Ok(e) => e,
                Err(e) => return Err(abort(out, &trainer, e, started)),
            };
            out.metrics.extend(MetricRow::from_eval(epoch, "val", &eval));
            out.angles.extend(stats.angles.iter().map(|(b, p)| AngleRow::new(epoch, *b, p)));
            out.record.rows.push(epoch_row(&stats, &eval));
        }
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            out.checkpoints.push(trainer.checkpoint(epoch));
        }
        out.epoch_stats.push(stats);
    }

    let last = cfg.total_epochs.saturating_sub(1);
    let test = match evaluate(&trainer.model, &splits.test, cfg.uni_mode, last) {
        Ok(e) => e,
        Err(e) => return Err(abort(out, &trainer, e, started)),
    };
    out.metrics.extend(MetricRow::from_eval(last, "test", &test));
    out.record.final_test = Some(FinalMetrics::from(&test));
    out.record.status = RunStatus::Complete;
    out.record.wall_clock_secs = started.elapsed().as_secs_f64();
    out.model = trainer.model.clone();
    out.adam = trainer.adam.clone();
    out.rng = trainer.rng_cursor();
    Ok(out)
}

fn abort(mut out: TrainOutcome, trainer: &Trainer, cause: Error, started: Instant) -> Error {
    out.record.status = RunStatus::Aborted;
    out.record.wall_clock_secs = started.elapsed().as_secs_f64();
    out.model = trainer.model.clone();
    out.adam = trainer.adam.clone();
    out.rng = trainer.rng_cursor();
    out.record.abort = Some(AbortDiagnostics { cause: cause.to_string(), context: trainer.failure_context().clone() });
    Error::Aborted(Box::new(AbortReport { cause: cause.to_string(), context: trainer.failure_context().clone(), partial: out }))
}

fn epoch_row(stats: &EpochStats, eval: &Evaluation) -> EpochRow {
    let mean_angle = |m: Modality| summarize_angles(stats.angles.iter().map(|(_, p)| p).filter(|p| p.modality == m)).0;
    let undefined = stats.angles.iter().filter(|(_, p)| !p.defined()).count();
    EpochRow {
        schema_version: crate::data::SCHEMA_VERSION.to_string(),
        epoch: stats.epoch,
        phase: match stats.phase {
            Phase::Warmup => "warmup".into(),
            Phase::Remix => stats.variant.key().into(),
        },
        train_loss: stats.loss.total,
        train_loss_fused: stats.loss.fused,
        train_loss_head_audio: stats.loss.heads[0],
        train_loss_head_video: stats.loss.heads[1],
        samples_seen: stats.samples_seen,
        num_batches: stats.num_batches,
        masks_applied: u8::from(stats.masks_applied),
        pure_batches: u8::from(stats.pure_batches),
        retained_audio: stats.retained.as_ref().map(|c| c[0]),
        retained_video: stats.retained.as_ref().map(|c| c[1]),
        val_acc_multimodal: eval.acc_multimodal,
        val_acc_audio: eval.acc_head[0],
        val_acc_video: eval.acc_head[1],
        val_acc_audio_zero_mask: eval.acc_zero_mask[0],
        val_acc_video_zero_mask: eval.acc_zero_mask[1],
        rho: eval.rho.rho,
        mean_angle_audio: mean_angle(Modality::Audio),
        mean_angle_video: mean_angle(Modality::Video),
        undefined_angles: undefined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, split_dataset, SynthSpec};

    fn tiny_splits(seed: u64) -> Splits {
        let spec = SynthSpec { samples_per_class: 30, dim_a: 8, dim_v: 8, seed, ..SynthSpec::default() };
        split_dataset(&generate_dataset(&spec).unwrap(), 0.7, 0.15, seed).unwrap()
    }

    fn tiny_cfg(variant: Variant) -> TrainConfig {
        TrainConfig {
            total_epochs: 6,
            warmup_epochs: 2,
            batch_size: 16,
            hidden_dim: 12,
            feature_dim: 6,
            variant,
            adam: AdamConfig { lr: 5e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = TrainConfig { warmup_epochs: 7, total_epochs: 5, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Validation { field, .. }) if field == "warmup_epochs"));
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Validation { field, .. }) if field == "batch_size"));
    }

    #[test]
    fn zero_lr_leaves_model_unchanged() {
        let splits = tiny_splits(1);
        let cfg = TrainConfig { adam: AdamConfig { lr: 0.0, ..AdamConfig::default() }, ..tiny_cfg(Variant::Baseline) };
        let mut t = Trainer::new(cfg, &splits.train).unwrap();
        let before = t.model.clone();
        let stats = t.warmup_epoch(0).unwrap();
        assert_eq!(t.model, before);
        assert_eq!(stats.samples_seen, splits.train.len());
        assert!(stats.loss.total > 0.0);
    }

    #[test]
    fn variant_lattice_is_structural() {
        let splits = tiny_splits(2);
        for variant in Variant::ALL {
            let out = run_training(&tiny_cfg(variant), &splits).unwrap();
            for s in &out.epoch_stats {
                assert_eq!(s.samples_seen, splits.train.len());
                if s.epoch < 2 || variant == Variant::Baseline {
                    assert!(!s.masks_applied && !s.pure_batches);
                    assert!(s.retained.is_none());
                } else {
                    assert_eq!(s.masks_applied, variant.masks(), "{variant} epoch {}", s.epoch);
                    assert_eq!(s.pure_batches, variant.pure_batches(), "{variant} epoch {}", s.epoch);
                }
            }
            assert!(out.partitions.iter().all(|p| p.epoch >= 2));
            if variant == Variant::Baseline {
                assert!(out.partitions.is_empty());
            } else {
                assert_eq!(out.partitions.len(), 4);
            }
        }
    }

    #[test]
    fn ablation_epoch_rejects_other_variants() {
        let splits = tiny_splits(3);
        let mut t = Trainer::new(tiny_cfg(Variant::FullRemix), &splits.train).unwrap();
        assert!(t.ablation_epoch(0, Variant::FullRemix).is_err());
    }

    #[test]
    fn warmup_equals_total_is_baseline() {
        let splits = tiny_splits(4);
        let mk = |variant| TrainConfig { warmup_epochs: 6, ..tiny_cfg(variant) };
        let a = run_training(&mk(Variant::FullRemix), &splits).unwrap();
        let b = run_training(&mk(Variant::Baseline), &splits).unwrap();
        assert_eq!(a.model, b.model);
        assert!(a.partitions.is_empty());
    }

    #[test]
    fn decouple_every_reuses_partition() {
        let splits = tiny_splits(5);
        let cfg = TrainConfig { decouple_every: 2, ..tiny_cfg(Variant::FullRemix) };
        let out = run_training(&cfg, &splits).unwrap();
        let epochs: Vec<usize> = out.partitions.iter().map(|p| p.epoch).collect();
        assert_eq!(epochs, vec![2, 4]);
    }

    #[test]
    fn frozen_heads_do_not_move_after_warmup() {
        let splits = tiny_splits(6);
        let cfg = TrainConfig { freeze_heads_after_warmup: true, ..tiny_cfg(Variant::FullRemix) };
        let mut t = Trainer::new(cfg, &splits.train).unwrap();
        t.run_epoch(0).unwrap();
        t.run_epoch(1).unwrap();
        let heads = t.model.heads.clone();
        t.run_epoch(2).unwrap();
        assert_eq!(t.model.heads, heads);
    }
}
