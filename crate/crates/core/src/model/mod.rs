//! Recurrent-convolutional detector: per-frame backbone, GRU head over
//! time, and the spatial-transformer and multi-level variants.
//!
//! Frames enter as `[B·T, 3, H, W]` with row `b·T + t` holding frame `t`
//! of sequence `b`.

pub mod backbone;
pub mod checkpoint;
pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{Init, ParamStore};
use crate::tensor::{Scalar, Tensor};
use backbone::Backbone;
use layers::{Conv, GruCell, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Resnet50,
    Densenet121,
    Tinyconv,
}

impl BackboneKind {
    pub fn native_feature_dim(self, tiny_widths: &[usize]) -> Option<usize> {
        match self {
            BackboneKind::Resnet50 => Some(2048),
            BackboneKind::Densenet121 => Some(1024),
            BackboneKind::Tinyconv => tiny_widths.last().copied(),
        }
    }

    fn tap_count(self, tiny_widths: &[usize]) -> usize {
        match self {
            BackboneKind::Tinyconv => tiny_widths.len(),
            _ => 4,
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackboneKind::Resnet50 => "resnet50",
            BackboneKind::Densenet121 => "densenet121",
            BackboneKind::Tinyconv => "tinyconv",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Stn,
    MultiRecurrence,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::Stn => "stn",
            Variant::MultiRecurrence => "multi_recurrence",
        })
    }
}

/// GRU head configuration. The cell type is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrentHeadSpec {
    pub hidden_size: usize,
    pub bidirectional: bool,
    pub num_layers: usize,
}

impl Default for RecurrentHeadSpec {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            bidirectional: true,
            num_layers: 1,
        }
    }
}

impl RecurrentHeadSpec {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of the final-output vector.
    pub fn output_width(&self) -> usize {
        self.hidden_size * self.directions()
    }

    /// Closed-form GRU parameter count for an input of width `input`.
    pub fn param_count(&self, input: usize) -> usize {
        (0..self.num_layers)
            .map(|l| {
                let inp = if l == 0 { input } else { self.output_width() };
                self.directions() * GruCell::param_count(inp, self.hidden_size)
            })
            .sum()
    }
}

/// Localisation network layout. Only the defaults are supported; the
/// struct documents the shape and is recorded in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StnSpec {
    pub conv_channels: [usize; 2],
    pub kernel_sizes: [usize; 2],
    pub pooled_size: usize,
    pub fc_hidden: usize,
}

impl Default for StnSpec {
    fn default() -> Self {
        Self {
            conv_channels: [8, 10],
            kernel_sizes: [7, 5],
            pooled_size: 4,
            fc_hidden: 32,
        }
    }
}

impl StnSpec {
    pub const AFFINE_PARAMS: usize = 6;
    pub const IDENTITY: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub backbone: BackboneKind,
    pub feature_dim: usize,
    pub recurrent: RecurrentHeadSpec,
    pub variant: Variant,
    pub sequence_length: usize,
    pub image_size: usize,
    /// Stage widths of the tinyconv backbone.
    pub tiny_widths: Vec<usize>,
    pub stn: StnSpec,
}

impl Default for ModelSpec {
    /// The desk-scale detector: tinyconv, bidirectional GRU, 5 frames.
    fn default() -> Self {
        Self::tiny(5, true)
    }
}

fn default_image_size() -> usize {
    224
}

fn default_tiny_widths() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

impl ModelSpec {
    /// Desk-scale defaults: tinyconv, GRU with 32 hidden units.
    pub fn tiny(sequence_length: usize, bidirectional: bool) -> Self {
        Self {
            backbone: BackboneKind::Tinyconv,
            feature_dim: 64,
            recurrent: RecurrentHeadSpec {
                hidden_size: 32,
                bidirectional,
                num_layers: 1,
            },
            variant: Variant::Plain,
            sequence_length,
            image_size: default_image_size(),
            tiny_widths: default_tiny_widths(),
            stn: StnSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.recurrent.hidden_size == 0 || self.recurrent.num_layers == 0 {
            return fail("recurrent head needs hidden_size >= 1 and num_layers >= 1".into());
        }
        if self.sequence_length == 0 || self.image_size == 0 {
            return fail("sequence_length and image_size must be positive".into());
        }
        if self.backbone == BackboneKind::Tinyconv {
            if self.image_size > 224 {
                return fail(format!("tinyconv supports image_size <= 224, got {}", self.image_size));
            }
            if self.tiny_widths.is_empty() || self.tiny_widths.contains(&0) {
                return fail("tinyconv needs at least one stage of positive width".into());
            }
        }
        let native = self.backbone.native_feature_dim(&self.tiny_widths);
        if native != Some(self.feature_dim) {
            return fail(format!(
                "feature_dim {} does not match the {} embedding width {:?}",
                self.feature_dim, self.backbone, native
            ));
        }
        if self.variant == Variant::MultiRecurrence && self.backbone.tap_count(&self.tiny_widths) != 4 {
            return fail(format!(
                "multi_recurrence needs 4 backbone blocks, {} has {}",
                self.backbone,
                self.backbone.tap_count(&self.tiny_widths)
            ));
        }
        if self.stn != StnSpec::default() {
            return fail("only the default localisation network layout is supported".into());
        }
        Ok(())
    }

    /// Legend description: backbone, frames, alignment, directionality.
    pub fn describe(&self) -> String {
        let dir = if self.recurrent.bidirectional {
            "bidir"
        } else {
            "unidir"
        };
        format!("{} T={} {} {}", self.backbone, self.sequence_length, self.variant, dir)
    }
}

/// Localisation net → affine grid → bilinear sampler.
#[derive(Clone, Debug)]
pub struct Stn {
    conv1: Conv,
    conv2: Conv,
    fc1: Linear,
    pub regressor: Linear,
    pooled: usize,
}

impl Stn {
    fn new<S: Scalar>(spec: &StnSpec, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) -> Self {
        let [c1, c2] = spec.conv_channels;
        let [k1, k2] = spec.kernel_sizes;
        let conv1 = Conv::new(store, rng, "stn.conv1", 3, c1, k1, 1, k1 / 2, true);
        let conv2 = Conv::new(store, rng, "stn.conv2", c1, c2, k2, 1, k2 / 2, true);
        let flat = c2 * spec.pooled_size * spec.pooled_size;
        let fc1 = Linear::new(store, rng, "stn.fc1", flat, spec.fc_hidden);
        let regressor = Linear::with_init(
            store,
            rng,
            "stn.fc2",
            spec.fc_hidden,
            StnSpec::AFFINE_PARAMS,
            Init::Zeros,
            Init::Values(&StnSpec::IDENTITY),
        );
        Self {
            conv1,
            conv2,
            fc1,
            regressor,
            pooled: spec.pooled_size,
        }
    }

    /// Affine parameters `[N, 6]` for images `[N, 3, H, W]`.
    pub fn theta<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Var {
        let n = g.shape(x)[0];
        let mut h = self.conv1.forward(g, x);
        h = g.max_pool2d(h, 2, 2, 0, true);
        h = g.relu(h);
        h = self.conv2.forward(g, h);
        h = g.max_pool2d(h, 2, 2, 0, true);
        h = g.relu(h);
        h = g.adaptive_avg_pool2d(h, self.pooled, self.pooled);
        let flat = g.shape(h)[1..].iter().product::<usize>();
        h = g.reshape(h, &[n, flat]);
        h = self.fc1.forward(g, h);
        h = g.relu(h);
        self.regressor.forward(g, h)
    }

    pub fn align<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Var {
        let theta = self.theta(g, x);
        g.grid_sample(x, theta)
    }
}

/// Stacked (optionally bidirectional) GRU returning the final output:
/// forward state after the last step, concatenated with the backward
/// state after it has consumed the first step.
#[derive(Clone, Debug)]
pub struct GruStack {
    pub layers: Vec<(GruCell, Option<GruCell>)>,
    pub spec: RecurrentHeadSpec,
}

impl GruStack {
    fn new<S: Scalar>(
        spec: RecurrentHeadSpec,
        input: usize,
        name: &str,
        store: &mut ParamStore<S>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..spec.num_layers)
            .map(|l| {
                let inp = if l == 0 { input } else { spec.output_width() };
                let fwd = GruCell::new(store, rng, &format!("{name}.l{l}.fwd"), inp, spec.hidden_size);
                let bwd = spec
                    .bidirectional
                    .then(|| GruCell::new(store, rng, &format!("{name}.l{l}.bwd"), inp, spec.hidden_size));
                (fwd, bwd)
            })
            .collect();
        Self { layers, spec }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].0.input_size
    }

    /// `steps`: T tensors of shape `[B, input]`.
    pub fn final_output<S: Scalar>(&self, g: &mut Graph<'_, S>, steps: &[Var]) -> Var {
        let mut inputs = steps.to_vec();
        let mut last = None;
        for (fwd, bwd) in &self.layers {
            let f = fwd.run(g, &inputs, false);
            match bwd {
                Some(bwd) => {
                    let b = bwd.run(g, &inputs, true);
                    last = Some(g.concat(&[f[f.len() - 1], b[0]], 1));
                    inputs = f.iter().zip(&b).map(|(&f, &b)| g.concat(&[f, b], 1)).collect();
                }
                None => {
                    last = Some(f[f.len() - 1]);
                    inputs = f;
                }
            }
        }
        last.expect("at least one layer")
    }
}

#[derive(Clone, Debug)]
pub enum Head {
    Single { gru: GruStack, classifier: Linear },
    Multi { grus: Vec<GruStack>, fusion: Linear },
}

/// The full detector with its parameters.
#[derive(Clone, Debug)]
pub struct Detector<S: Scalar> {
    spec: ModelSpec,
    seed: u64,
    store: ParamStore<S>,
    pub backbone: Backbone,
    pub head: Head,
    /// Single-frame classifier used during backbone pretraining.
    pub frame_classifier: Linear,
    pub stn: Option<Stn>,
}

pub const BACKBONE_PREFIX: &str = "backbone.";
pub const HEAD_PREFIX: &str = "head.";
pub const FRAME_CLASSIFIER_PREFIX: &str = "frame_classifier.";
pub const STN_PREFIX: &str = "stn.";

impl<S: Scalar> Detector<S> {
    /// Builds and initialises every parameter from `seed`. Registration
    /// order is backbone, head, frame classifier, STN, so variants built
    /// from the same seed share backbone and head values.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let backbone = Backbone::new(spec.backbone, &spec.tiny_widths, &mut store, &mut rng);
        let head = match spec.variant {
            Variant::Plain | Variant::Stn => {
                let gru = GruStack::new(spec.recurrent, spec.feature_dim, "head.gru", &mut store, &mut rng);
                let classifier = Linear::new(
                    &mut store,
                    &mut rng,
                    "head.classifier",
                    spec.recurrent.output_width(),
                    1,
                );
                Head::Single { gru, classifier }
            }
            Variant::MultiRecurrence => {
                let grus = backbone
                    .tap_widths()
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| GruStack::new(spec.recurrent, w, &format!("head.tap{k}"), &mut store, &mut rng))
                    .collect::<Vec<_>>();
                let width = grus.len() * spec.recurrent.output_width();
                let fusion = Linear::new(&mut store, &mut rng, "head.fusion", width, 1);
                Head::Multi { grus, fusion }
            }
        };
        let frame_classifier = Linear::new(&mut store, &mut rng, "frame_classifier", spec.feature_dim, 1);
        let stn = (spec.variant == Variant::Stn).then(|| Stn::new(&spec.stn, &mut store, &mut rng));
        Ok(Self {
            spec: spec.clone(),
            seed,
            store,
            backbone,
            head,
            frame_classifier,
            stn,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn store(&self) -> &ParamStore<S> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.store
    }

    /// Number of GRU heads (1, or 4 for the multi-level variant).
    pub fn recurrent_head_count(&self) -> usize {
        match &self.head {
            Head::Single { .. } => 1,
            Head::Multi { grus, .. } => grus.len(),
        }
    }

    /// Same architecture, parameters converted to another precision.
    pub fn cast<T: Scalar>(&self) -> Detector<T> {
        Detector {
            spec: self.spec.clone(),
            seed: self.seed,
            store: self.store.cast(),
            backbone: self.backbone.clone(),
            head: self.head.clone(),
            frame_classifier: self.frame_classifier.clone(),
            stn: self.stn.clone(),
        }
    }

    fn check_frames(&self, g: &Graph<'_, S>, x: Var, time: usize) -> Result<usize> {
        let shape = g.shape(x);
        let s = self.spec.image_size;
        if shape.len() != 4 || shape[1] != 3 || shape[2] != s || shape[3] != s {
            return Err(Error::InvalidInput(format!(
                "expected frames [B*T, 3, {s}, {s}], got {shape:?}"
            )));
        }
        if time == 0 || shape[0] == 0 || !shape[0].is_multiple_of(time) {
            return Err(Error::InvalidInput(format!(
                "{} frames do not split into sequences of length {time}",
                shape[0]
            )));
        }
        Ok(shape[0] / time)
    }

    fn maybe_align(&self, g: &mut Graph<'_, S>, x: Var) -> Var {
        match &self.stn {
            Some(stn) => stn.align(g, x),
            None => x,
        }
    }

    /// Per-frame embeddings `[B, T, D]`; time is folded into the batch.
    pub fn encode_frames(&self, g: &mut Graph<'_, S>, x: Var, time: usize) -> Result<Var> {
        let b = self.check_frames(g, x, time)?;
        let x = self.maybe_align(g, x);
        let enc = self.backbone.forward(g, x, false);
        Ok(g.reshape(enc.features, &[b, time, self.spec.feature_dim]))
    }

    /// Splits `[B·T, D]` rows into T tensors `[B, D]`.
    fn time_steps(g: &mut Graph<'_, S>, rows: Var, b: usize, time: usize) -> Vec<Var> {
        let d = g.shape(rows)[1];
        let seq = g.reshape(rows, &[b, time * d]);
        (0..time).map(|t| g.slice(seq, 1, t * d, d)).collect()
    }

    /// Recurrent classification of features `[B, T, D]` into logits `[B]`
    /// with the single-head classifier.
    pub fn recurrent_classify(&self, g: &mut Graph<'_, S>, features: Var) -> Result<Var> {
        let Head::Single { gru, classifier } = &self.head else {
            return Err(Error::Config("model has a multi-level head".into()));
        };
        let shape = g.shape(features).to_vec();
        if shape.len() != 3 || shape[2] != gru.input_size() || shape[1] == 0 {
            return Err(Error::InvalidInput(format!(
                "expected features [B, T, {}], got {shape:?}",
                gru.input_size()
            )));
        }
        let (b, t, d) = (shape[0], shape[1], shape[2]);
        let rows = g.reshape(features, &[b * t, d]);
        let steps = Self::time_steps(g, rows, b, t);
        let h = gru.final_output(g, &steps);
        let logit = classifier.forward(g, h);
        Ok(g.reshape(logit, &[b]))
    }

    /// Multi-level classification from four pooled tap sequences, each
    /// `[B·T, C_k]`.
    pub fn multi_recurrent_classify(&self, g: &mut Graph<'_, S>, taps: &[Var], b: usize, time: usize) -> Result<Var> {
        let Head::Multi { grus, fusion } = &self.head else {
            return Err(Error::Config("model has no multi-level head".into()));
        };
        if taps.len() != grus.len() {
            return Err(Error::Config(format!(
                "expected {} block outputs, got {}",
                grus.len(),
                taps.len()
            )));
        }
        let finals: Vec<Var> = taps
            .iter()
            .zip(grus)
            .map(|(&tap, gru)| {
                let steps = Self::time_steps(g, tap, b, time);
                gru.final_output(g, &steps)
            })
            .collect();
        let joined = g.concat(&finals, 1);
        let logit = fusion.forward(g, joined);
        Ok(g.reshape(logit, &[b]))
    }

    /// Logits `[B]` for frames `[B·T, 3, H, W]`.
    pub fn forward(&self, g: &mut Graph<'_, S>, x: Var, time: usize) -> Result<Var> {
        let b = self.check_frames(g, x, time)?;
        let x = self.maybe_align(g, x);
        match &self.head {
            Head::Single { .. } => {
                let enc = self.backbone.forward(g, x, false);
                let feats = g.reshape(enc.features, &[b, time, self.spec.feature_dim]);
                self.recurrent_classify(g, feats)
            }
            Head::Multi { .. } => {
                let enc = self.backbone.forward(g, x, true);
                self.multi_recurrent_classify(g, &enc.taps, b, time)
            }
        }
    }

    /// Single-frame logits `[N]` from the pretraining classifier.
    pub fn frame_logits(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let n = self.check_frames(g, x, 1)?;
        let enc = self.backbone.forward(g, x, false);
        let logit = self.frame_classifier.forward(g, enc.features);
        Ok(g.reshape(logit, &[n]))
    }

    /// Inference-mode logits for a batch of frames.
    pub fn predict(&self, frames: Tensor<S>, time: usize) -> Result<Vec<S>> {
        let mut g = Graph::new(&self.store, false);
        let x = g.input(frames);
        let logits = self.forward(&mut g, x, time)?;
        Ok(g.value(logits).data().to_vec())
    }

    /// Inference-mode logits of the single-frame classifier.
    pub fn predict_frames(&self, frames: Tensor<S>) -> Result<Vec<S>> {
        let mut g = Graph::new(&self.store, false);
        let x = g.input(frames);
        let logits = self.frame_logits(&mut g, x)?;
        Ok(g.value(logits).data().to_vec())
    }
}

/// Converts channel-last frames `[N, H, W, 3]` into `[N, 3, H, W]`.
pub fn frames_to_nchw<S: Scalar>(data: &[f32], n: usize, h: usize, w: usize) -> Tensor<S> {
    assert_eq!(data.len(), n * h * w * 3, "frame buffer size");
    let plane = h * w;
    let mut out = vec![S::zero(); data.len()];
    for img in 0..n {
        let src = &data[img * plane * 3..(img + 1) * plane * 3];
        let dst = &mut out[img * plane * 3..(img + 1) * plane * 3];
        for p in 0..plane {
            for c in 0..3 {
                dst[c * plane + p] = S::from_f64(src[p * 3 + c] as f64);
            }
        }
    }
    Tensor::from_vec(&[n, 3, h, w], out)
}

#[cfg(test)]
mod tests;
