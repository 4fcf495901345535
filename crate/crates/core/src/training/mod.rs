//! Two-stage optimisation: single-frame backbone pretraining, then
//! end-to-end training of backbone and recurrent head on windows.

mod adam;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;

use crate::autograd::{stable_sigmoid, Graph, Var};
use crate::dataset::loader::{load_batch, Batch, Normalization, SampleSource};
use crate::dataset::{SampleDescriptor, Split};
use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, ScoreEntry, ScoreMeta, ScoreSet};
use crate::model::checkpoint::{self, CheckpointMeta, Stage};
use crate::model::{BackboneKind, Detector, ModelSpec, Variant, BACKBONE_PREFIX, FRAME_CLASSIFIER_PREFIX};
use crate::params::ParamId;
use crate::tensor::Tensor;

/// Score threshold for train/val accuracy.
pub const ACCURACY_THRESHOLD: f64 = 0.5;
pub const LOG_FILE: &str = "log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without a new best validation accuracy before stopping;
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    /// Multiplier on the learning rate of backbone parameters during
    /// end-to-end training.
    pub backbone_lr_scale: f64,
    pub normalization: Normalization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::EndToEnd,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            early_stop_patience: 5,
            backbone_lr_scale: 1.0,
            normalization: Normalization::default(),
        }
    }
}

impl TrainConfig {
    /// `learning_rate` may be zero (a freeze check) but not negative.
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.backbone_lr_scale < 0.0 || !self.backbone_lr_scale.is_finite() {
            return Err(Error::Config(format!(
                "backbone_lr_scale must be >= 0, got {}",
                self.backbone_lr_scale
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.eps.is_nan()
            || self.eps <= 0.0
        {
            return Err(Error::Config(
                "Adam moments must lie in [0, 1) and eps must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Adam {
        Adam::new(self.learning_rate, self.beta1, self.beta2, self.eps)
    }
}

/// One line of `log.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub split: Split,
    /// Mean binary cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

/// What the network is asked to classify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Single frames through the pretraining classifier.
    Frame,
    /// Windows through the recurrent head.
    Sequence,
}

impl Objective {
    fn logits<'p>(self, model: &Detector<f32>, g: &mut Graph<'p, f32>, batch: &Batch) -> Result<Var> {
        let x = g.input(batch.to_tensor());
        match self {
            Objective::Frame => model.frame_logits(g, x),
            Objective::Sequence => model.forward(g, x, batch.time),
        }
    }

    fn trains(self, name: &str) -> bool {
        match self {
            Objective::Frame => name.starts_with(BACKBONE_PREFIX) || name.starts_with(FRAME_CLASSIFIER_PREFIX),
            Objective::Sequence => !name.starts_with(FRAME_CLASSIFIER_PREFIX),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

impl BatchStats {
    fn absorb(&mut self, other: BatchStats) {
        self.loss_sum += other.loss_sum;
        self.correct += other.correct;
        self.count += other.count;
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.count.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count.max(1) as f64
    }
}

fn stats(logits: &[f32], targets: &[f32], mean_loss: f64) -> BatchStats {
    let correct = logits
        .iter()
        .zip(targets)
        .filter(|(&z, &y)| (stable_sigmoid(z as f64) >= ACCURACY_THRESHOLD) == (y > 0.5))
        .count();
    BatchStats {
        loss_sum: mean_loss * logits.len() as f64,
        correct,
        count: logits.len(),
    }
}

/// Optimiser plus the parameter subset it owns.
pub struct Trainer {
    pub objective: Objective,
    optimizer: Adam,
    backbone_lr_scale: f64,
}

impl Trainer {
    pub fn new(objective: Objective, cfg: &TrainConfig) -> Self {
        Self {
            objective,
            optimizer: cfg.optimizer(),
            backbone_lr_scale: cfg.backbone_lr_scale,
        }
    }

    /// One forward/backward pass and parameter update.
    pub fn step(&mut self, model: &mut Detector<f32>, batch: &Batch) -> Result<BatchStats> {
        let objective = self.objective;
        self.update(model, &batch.targets(), |m, g| objective.logits(m, g, batch))
    }

    /// As [`Trainer::step`], from backbone embeddings `[B, T, D]` of a
    /// frozen backbone.
    fn step_features(
        &mut self,
        model: &mut Detector<f32>,
        features: &Tensor<f32>,
        targets: &[f32],
    ) -> Result<BatchStats> {
        self.update(model, targets, |m, g| {
            let x = g.input(features.clone());
            m.recurrent_classify(g, x)
        })
    }

    fn update(
        &mut self,
        model: &mut Detector<f32>,
        targets: &[f32],
        logits: impl for<'p> FnOnce(&'p Detector<f32>, &mut Graph<'p, f32>) -> Result<Var>,
    ) -> Result<BatchStats> {
        let (objective, backbone_scale) = (self.objective, self.backbone_lr_scale);
        let rate = |n: &str| match objective {
            _ if !objective.trains(n) => 0.0,
            Objective::Sequence if n.starts_with(BACKBONE_PREFIX) => backbone_scale,
            _ => 1.0,
        };
        let frozen: Vec<ParamId> = model
            .store()
            .entries()
            .filter(|(_, e)| rate(&e.name) == 0.0)
            .map(|(id, _)| id)
            .collect();
        let (grads, buffers, out) = {
            let mut g = Graph::new(model.store(), true);
            g.freeze(frozen);
            let logits = logits(model, &mut g)?;
            let loss = g.bce_with_logits(logits, targets);
            let loss_value = g.value(loss).data()[0] as f64;
            if !loss_value.is_finite() {
                return Err(Error::Degenerate(format!("training loss became {loss_value}")));
            }
            let out = stats(g.value(logits).data(), targets, loss_value);
            let buffers = g.take_buffer_updates();
            (g.backward(loss).into_params(), buffers, out)
        };
        self.optimizer.step(model.store_mut(), &grads, rate);
        for (id, value) in buffers {
            *model.store_mut().get_mut(id) = value;
        }
        Ok(out)
    }
}

/// Backbone embeddings per window, computed once and reused across
/// epochs. Valid only while the backbone is frozen and has no batch
/// statistics, and the head reads nothing but the final embeddings.
struct FeatureCache {
    features: Vec<Option<Vec<f32>>>,
}

impl FeatureCache {
    fn applies(model: &Detector<f32>, objective: Objective, cfg: &TrainConfig) -> bool {
        let spec = model.spec();
        objective == Objective::Sequence
            && cfg.backbone_lr_scale == 0.0
            && spec.backbone == BackboneKind::Tinyconv
            && spec.variant == Variant::Plain
    }

    fn new(len: usize) -> Self {
        Self {
            features: vec![None; len],
        }
    }

    /// Embeddings `[B, T, D]` and targets of `descriptors`, batched in the
    /// order [`load_batch`] uses for the same seed.
    fn batches(
        &mut self,
        model: &Detector<f32>,
        descriptors: &[SampleDescriptor],
        source: &dyn SampleSource,
        batch_size: usize,
        shuffle: Option<u64>,
        norm: Normalization,
    ) -> Result<Vec<(Tensor<f32>, Vec<f32>)>> {
        let missing: Vec<usize> = (0..descriptors.len()).filter(|&i| self.features[i].is_none()).collect();
        let wanted: Vec<SampleDescriptor> = missing.iter().map(|&i| descriptors[i].clone()).collect();
        let mut slots = missing.into_iter();
        for batch in load_batch(&wanted, source, batch_size, None, norm)? {
            let batch = batch?;
            let mut g = Graph::new(model.store(), false);
            let x = g.input(batch.to_tensor());
            let f = model.encode_frames(&mut g, x, batch.time)?;
            let per_window = g.value(f).numel() / batch.len();
            for chunk in g.value(f).data().chunks(per_window) {
                let i = slots.next().expect("one slot per loaded window");
                self.features[i] = Some(chunk.to_vec());
            }
        }

        let mut order: Vec<usize> = (0..descriptors.len()).collect();
        if let Some(seed) = shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let (time, dim) = (model.spec().sequence_length, model.spec().feature_dim);
        Ok(order
            .chunks(batch_size)
            .map(|idx| {
                let data: Vec<f32> = idx
                    .iter()
                    .flat_map(|&i| self.features[i].as_deref().unwrap_or_default())
                    .copied()
                    .collect();
                let targets = idx.iter().map(|&i| descriptors[i].label.as_target() as f32).collect();
                (Tensor::from_vec(&[idx.len(), time, dim], data), targets)
            })
            .collect())
    }
}

/// Inference-mode loss and accuracy from cached embeddings.
fn measure_features(model: &Detector<f32>, batches: &[(Tensor<f32>, Vec<f32>)]) -> Result<BatchStats> {
    let mut total = BatchStats::default();
    for (features, targets) in batches {
        let mut g = Graph::new(model.store(), false);
        let x = g.input(features.clone());
        let logits = model.recurrent_classify(&mut g, x)?;
        let loss = g.bce_with_logits(logits, targets);
        total.absorb(stats(g.value(logits).data(), targets, g.value(loss).data()[0] as f64));
    }
    Ok(total)
}

/// Inference-mode loss and accuracy over `descriptors`.
pub fn measure(
    model: &Detector<f32>,
    objective: Objective,
    descriptors: &[SampleDescriptor],
    source: &dyn SampleSource,
    batch_size: usize,
    norm: Normalization,
) -> Result<BatchStats> {
    let mut total = BatchStats::default();
    for batch in load_batch(descriptors, source, batch_size, None, norm)? {
        let batch = batch?;
        let targets: Vec<f32> = batch.targets();
        let mut g = Graph::new(model.store(), false);
        let logits = objective.logits(model, &mut g, &batch)?;
        let loss = g.bce_with_logits(logits, &targets);
        total.absorb(stats(g.value(logits).data(), &targets, g.value(loss).data()[0] as f64));
    }
    Ok(total)
}

/// Artifacts and history of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    /// 1-based epoch of the retained checkpoint.
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub records: Vec<TrainLogRecord>,
}

impl TrainOutcome {
    pub fn records_for(&self, split: Split) -> impl Iterator<Item = &TrainLogRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

fn prepare_run_dir(run_dir: &Path) -> Result<()> {
    let log = run_dir.join(LOG_FILE);
    if log.is_file() && fs::metadata(&log).map(|m| m.len() > 0).unwrap_or(false) {
        return Err(Error::Config(format!(
            "run directory {} already holds a training log; use a fresh directory",
            run_dir.display()
        )));
    }
    let ckpt = run_dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))
}

/// Shared epoch loop. Keeps the checkpoint with the highest validation
/// accuracy (earliest on ties) and the last one.
#[allow(clippy::too_many_arguments)]
fn fit(
    model: &mut Detector<f32>,
    objective: Objective,
    train: &[SampleDescriptor],
    val: &[SampleDescriptor],
    source: &dyn SampleSource,
    cfg: &TrainConfig,
    stage: Stage,
    run_dir: &Path,
) -> Result<TrainOutcome> {
    let reuse = FeatureCache::applies(model, objective, cfg);
    fit_with(model, objective, train, val, source, cfg, stage, run_dir, reuse)
}

#[allow(clippy::too_many_arguments)]
fn fit_with(
    model: &mut Detector<f32>,
    objective: Objective,
    train: &[SampleDescriptor],
    val: &[SampleDescriptor],
    source: &dyn SampleSource,
    cfg: &TrainConfig,
    stage: Stage,
    run_dir: &Path,
    reuse_features: bool,
) -> Result<TrainOutcome> {
    prepare_run_dir(run_dir)?;
    let mut caches = reuse_features.then(|| (FeatureCache::new(train.len()), FeatureCache::new(val.len())));
    let log_path = run_dir.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let best_path = run_dir.join(CHECKPOINT_DIR).join(BEST_CHECKPOINT);
    let last_path = run_dir.join(CHECKPOINT_DIR).join(LAST_CHECKPOINT);
    let start = Instant::now();
    let mut trainer = Trainer::new(objective, cfg);
    let mut records = Vec::new();
    let mut best: Option<(usize, Option<f64>)> = None;
    let mut since_best = 0;
    if val.is_empty() {
        log::warn!("no validation samples; the last epoch is retained as best");
    }

    for epoch in 1..=cfg.epochs {
        let shuffle = cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut train_stats = BatchStats::default();
        match &mut caches {
            Some((cache, _)) => {
                for (features, targets) in
                    cache.batches(model, train, source, cfg.batch_size, Some(shuffle), cfg.normalization)?
                {
                    train_stats.absorb(trainer.step_features(model, &features, &targets)?);
                }
            }
            None => {
                for batch in load_batch(train, source, cfg.batch_size, Some(shuffle), cfg.normalization)? {
                    train_stats.absorb(trainer.step(model, &batch?)?);
                }
            }
        }
        let mut epoch_records = vec![TrainLogRecord {
            epoch,
            split: Split::Train,
            loss: train_stats.mean_loss(),
            accuracy: train_stats.accuracy(),
            wall_time: start.elapsed().as_secs_f64(),
        }];
        let val_accuracy = if val.is_empty() {
            None
        } else {
            let s = match &mut caches {
                Some((_, cache)) => {
                    let batches = cache.batches(model, val, source, cfg.batch_size, None, cfg.normalization)?;
                    measure_features(model, &batches)?
                }
                None => measure(model, objective, val, source, cfg.batch_size, cfg.normalization)?,
            };
            epoch_records.push(TrainLogRecord {
                epoch,
                split: Split::Val,
                loss: s.mean_loss(),
                accuracy: s.accuracy(),
                wall_time: start.elapsed().as_secs_f64(),
            });
            Some(s.accuracy())
        };
        for r in &epoch_records {
            let line = serde_json::to_string(r).map_err(|e| Error::json("log record", e))?;
            writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
            log::info!(
                "{stage} epoch {epoch} {}: loss {:.4} accuracy {:.4}",
                r.split,
                r.loss,
                r.accuracy
            );
        }
        records.extend(epoch_records);

        let meta = CheckpointMeta {
            stage,
            epoch,
            val_accuracy,
        };
        checkpoint::save(&last_path, model, meta)?;
        let improved = match (best, val_accuracy) {
            (None, _) | (Some(_), None) => true,
            (Some((_, Some(b))), Some(a)) => a > b,
            (Some((_, None)), Some(_)) => true,
        };
        if improved {
            fs::copy(&last_path, &best_path).map_err(|e| Error::io(&best_path, e))?;
            best = Some((epoch, val_accuracy));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    let (best_epoch, best_val_accuracy) = best.ok_or_else(|| Error::Config("epochs must be >= 1".into()))?;
    Ok(TrainOutcome {
        best_checkpoint: best_path,
        last_checkpoint: last_path,
        best_epoch,
        best_val_accuracy,
        records,
    })
}

/// Distinct single frames covered by the windows of `split`, in window
/// order.
pub fn single_frame_samples(index: &[SampleDescriptor], split: Split) -> Vec<SampleDescriptor> {
    let mut seen = std::collections::HashSet::new();
    index
        .iter()
        .filter(|d| d.split == split)
        .flat_map(|d| d.single_frames())
        .filter(|d| seen.insert((d.video_id.clone(), d.frame_indices[0])))
        .collect()
}

/// Windows of `split` cut to length `t`; shorter windows are a
/// configuration error.
pub fn window_samples(index: &[SampleDescriptor], split: Split, t: usize) -> Result<Vec<SampleDescriptor>> {
    index
        .iter()
        .filter(|d| d.split == split)
        .map(|d| {
            if d.len() < t {
                Err(Error::Config(format!(
                    "sample {} has {} frames, model needs {t}",
                    d.sample_id(),
                    d.len()
                )))
            } else {
                Ok(d.truncated(t))
            }
        })
        .collect()
}

/// Trains backbone and single-frame classifier on every frame of the
/// training windows. Model parameters are initialised from `cfg.seed`.
pub fn pretrain_backbone(
    spec: &ModelSpec,
    index: &[SampleDescriptor],
    source: &dyn SampleSource,
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.stage != Stage::Pretrain {
        return Err(Error::Config(format!(
            "pretraining needs stage pretrain, got {}",
            cfg.stage
        )));
    }
    let train = single_frame_samples(index, Split::Train);
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let val = single_frame_samples(index, Split::Val);
    let mut model = Detector::new(spec, cfg.seed)?;
    fit(
        &mut model,
        Objective::Frame,
        &train,
        &val,
        source,
        cfg,
        Stage::Pretrain,
        run_dir,
    )
}

/// Checks that a pretrained checkpoint's backbone fits `spec`.
pub fn check_backbone_compatible(pretrained: &ModelSpec, spec: &ModelSpec) -> Result<()> {
    if pretrained.backbone != spec.backbone
        || pretrained.feature_dim != spec.feature_dim
        || pretrained.image_size != spec.image_size
        || (spec.backbone == crate::model::BackboneKind::Tinyconv && pretrained.tiny_widths != spec.tiny_widths)
    {
        return Err(Error::Config(format!(
            "checkpoint backbone ({}) does not match model spec ({})",
            pretrained.describe(),
            spec.describe()
        )));
    }
    Ok(())
}

/// Builds the end-to-end model from `cfg.seed`, copies the backbone of
/// `pretrained` into it when given, and trains everything except the
/// single-frame classifier on windows of length `spec.sequence_length`.
pub fn train_end_to_end(
    pretrained: Option<&Path>,
    spec: &ModelSpec,
    index: &[SampleDescriptor],
    source: &dyn SampleSource,
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.stage != Stage::EndToEnd {
        return Err(Error::Config(format!(
            "end-to-end training needs stage end_to_end, got {}",
            cfg.stage
        )));
    }
    let model = init_end_to_end(pretrained, spec, cfg.seed)?;
    let t = spec.sequence_length;
    let train = window_samples(index, Split::Train, t)?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let val = window_samples(index, Split::Val, t)?;
    let mut model = model;
    fit(
        &mut model,
        Objective::Sequence,
        &train,
        &val,
        source,
        cfg,
        Stage::EndToEnd,
        run_dir,
    )
}

/// Fresh end-to-end model with an optional pretrained backbone.
pub fn init_end_to_end(pretrained: Option<&Path>, spec: &ModelSpec, seed: u64) -> Result<Detector<f32>> {
    let mut model = Detector::new(spec, seed)?;
    if let Some(path) = pretrained {
        let (header, tensors) = checkpoint::read_tensors(path)?;
        check_backbone_compatible(&header.spec, spec)?;
        let n = checkpoint::copy_tensors(&mut model, &tensors, |name| name.starts_with(BACKBONE_PREFIX))?;
        log::info!("copied {n} backbone tensors from {}", path.display());
    }
    Ok(model)
}

/// Scores of one checkpoint on one split.
#[derive(Clone, Debug)]
pub struct CheckpointEval {
    pub scores: ScoreSet,
    pub report: EvalReport,
}

/// Deterministic forward pass over every sample of `split`. End-to-end
/// checkpoints score windows cut to their sequence length; pretraining
/// checkpoints score the first frame of each window with the
/// single-frame classifier.
pub fn evaluate_checkpoint(
    checkpoint_path: &Path,
    index: &[SampleDescriptor],
    split: Split,
    source: &dyn SampleSource,
    norm: Normalization,
    batch_size: usize,
) -> Result<CheckpointEval> {
    let (model, header) = checkpoint::load(checkpoint_path)?;
    let spec = &header.spec;
    let (objective, t, description, variant) = match header.stage {
        Stage::Pretrain => (
            Objective::Frame,
            1,
            format!("{} single-frame classifier", spec.backbone),
            format!("{} single-frame", spec.backbone),
        ),
        Stage::EndToEnd => {
            let dir = if spec.recurrent.bidirectional {
                "bidir"
            } else {
                "unidir"
            };
            (
                Objective::Sequence,
                spec.sequence_length,
                spec.describe(),
                format!("{} {} {dir}", spec.backbone, spec.variant),
            )
        }
    };
    let samples = window_samples(index, split, t)?;
    if samples.is_empty() {
        return Err(Error::Config(format!("{split} split is empty")));
    }
    let mut entries = Vec::with_capacity(samples.len());
    for batch in load_batch(&samples, source, batch_size.max(1), None, norm)? {
        let batch = batch?;
        let mut g = Graph::new(model.store(), false);
        let logits = objective.logits(&model, &mut g, &batch)?;
        for ((id, label), &z) in batch.sample_ids.iter().zip(&batch.labels).zip(g.value(logits).data()) {
            entries.push(ScoreEntry {
                sample_id: id.clone(),
                score: stable_sigmoid(z as f64),
                label: label.as_u8(),
            });
        }
    }
    let mut manipulations: Vec<String> = samples
        .iter()
        .filter(|d| d.label == crate::tubelet::Label::Fake)
        .map(|d| d.manipulation.to_string())
        .collect();
    manipulations.sort();
    manipulations.dedup();
    let manipulation = match manipulations.as_slice() {
        [one] => one.clone(),
        _ => "All".to_string(),
    };
    let meta = ScoreMeta {
        manipulation,
        description,
        frames: Some(t),
        variant: Some(variant),
    };
    let scores = ScoreSet::new(entries, meta)?;
    let report = EvalReport::from_scores(&scores, ACCURACY_THRESHOLD)?;
    Ok(CheckpointEval { scores, report })
}

/// Reads back a `log.jsonl`.
pub fn read_log(path: &Path) -> Result<Vec<TrainLogRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}
