//! Per-frame encoders. Every backbone exposes its final pooled embedding
//! and four intermediate block outputs (globally average-pooled) for the
//! multi-level head.

use rand::Rng;

use super::layers::{BatchNorm, Conv};
use super::BackboneKind;
use crate::autograd::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Scalar;

pub struct Encoded {
    /// `[N, feature_dim]`.
    pub features: Var,
    /// Pooled block outputs `[N, C_k]`, empty unless requested.
    pub taps: Vec<Var>,
}

#[derive(Clone, Debug)]
pub enum Backbone {
    TinyConv(TinyConv),
    ResNet50(ResNet50),
    DenseNet121(DenseNet121),
}

impl Backbone {
    pub fn new<S: Scalar, R: Rng>(
        kind: BackboneKind,
        tiny_widths: &[usize],
        store: &mut ParamStore<S>,
        rng: &mut R,
    ) -> Self {
        match kind {
            BackboneKind::Tinyconv => Backbone::TinyConv(TinyConv::new(tiny_widths, store, rng)),
            BackboneKind::Resnet50 => Backbone::ResNet50(ResNet50::new(store, rng)),
            BackboneKind::Densenet121 => Backbone::DenseNet121(DenseNet121::new(store, rng)),
        }
    }

    pub fn tap_widths(&self) -> Vec<usize> {
        match self {
            Backbone::TinyConv(b) => b.widths.clone(),
            Backbone::ResNet50(_) => vec![256, 512, 1024, 2048],
            Backbone::DenseNet121(_) => vec![256, 512, 1024, 1024],
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.tap_widths().last().expect("at least one stage")
    }

    /// `x: [N, 3, H, W]`.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var, want_taps: bool) -> Encoded {
        let blocks = match self {
            Backbone::TinyConv(b) => b.forward(g, x),
            Backbone::ResNet50(b) => b.forward(g, x),
            Backbone::DenseNet121(b) => b.forward(g, x),
        };
        let last = *blocks.last().expect("at least one stage");
        let features = g.global_avg_pool(last);
        let taps = if want_taps {
            blocks
                .iter()
                .map(|&b| if b == last { features } else { g.global_avg_pool(b) })
                .collect()
        } else {
            Vec::new()
        };
        Encoded { features, taps }
    }
}

/// Stages of `conv 3×3 (+bias) → ReLU → max-pool 2×2 (ceil)`.
#[derive(Clone, Debug)]
pub struct TinyConv {
    pub convs: Vec<Conv>,
    pub widths: Vec<usize>,
}

impl TinyConv {
    pub fn new<S: Scalar, R: Rng>(widths: &[usize], store: &mut ParamStore<S>, rng: &mut R) -> Self {
        let mut cin = 3;
        let convs = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let c = Conv::new(store, rng, &format!("backbone.stage{i}.conv"), cin, w, 3, 1, 1, true);
                cin = w;
                c
            })
            .collect();
        Self {
            convs,
            widths: widths.to_vec(),
        }
    }

    fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, mut x: Var) -> Vec<Var> {
        let mut outs = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            x = conv.forward(g, x);
            x = g.relu(x);
            x = g.max_pool2d(x, 2, 2, 0, true);
            outs.push(x);
        }
        outs
    }
}

#[derive(Clone, Debug)]
pub struct Bottleneck {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    conv3: Conv,
    bn3: BatchNorm,
    downsample: Option<(Conv, BatchNorm)>,
}

impl Bottleneck {
    fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Var {
        let mut y = self.conv1.forward(g, x);
        y = self.bn1.forward(g, y);
        y = g.relu(y);
        y = self.conv2.forward(g, y);
        y = self.bn2.forward(g, y);
        y = g.relu(y);
        y = self.conv3.forward(g, y);
        y = self.bn3.forward(g, y);
        let skip = match &self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(g, x);
                bn.forward(g, s)
            }
            None => x,
        };
        let y = g.add(y, skip);
        g.relu(y)
    }
}

/// Bottleneck ResNet with blocks (3, 4, 6, 3); stride on the 3×3 conv.
#[derive(Clone, Debug)]
pub struct ResNet50 {
    conv1: Conv,
    bn1: BatchNorm,
    layers: Vec<Vec<Bottleneck>>,
}

impl ResNet50 {
    pub fn new<S: Scalar, R: Rng>(store: &mut ParamStore<S>, rng: &mut R) -> Self {
        let conv1 = Conv::new(store, rng, "backbone.conv1", 3, 64, 7, 2, 3, false);
        let bn1 = BatchNorm::new(store, rng, "backbone.bn1", 64);
        let mut inplanes = 64;
        let mut layers = Vec::new();
        for (li, &(blocks, width, stride)) in [(3, 64, 1), (4, 128, 2), (6, 256, 2), (3, 512, 2)].iter().enumerate() {
            let mut layer = Vec::new();
            for bi in 0..blocks {
                let s = if bi == 0 { stride } else { 1 };
                let p = format!("backbone.layer{}.{bi}", li + 1);
                let out = width * 4;
                let downsample = (s != 1 || inplanes != out).then(|| {
                    (
                        Conv::new(store, rng, &format!("{p}.downsample.0"), inplanes, out, 1, s, 0, false),
                        BatchNorm::new(store, rng, &format!("{p}.downsample.1"), out),
                    )
                });
                layer.push(Bottleneck {
                    conv1: Conv::new(store, rng, &format!("{p}.conv1"), inplanes, width, 1, 1, 0, false),
                    bn1: BatchNorm::new(store, rng, &format!("{p}.bn1"), width),
                    conv2: Conv::new(store, rng, &format!("{p}.conv2"), width, width, 3, s, 1, false),
                    bn2: BatchNorm::new(store, rng, &format!("{p}.bn2"), width),
                    conv3: Conv::new(store, rng, &format!("{p}.conv3"), width, out, 1, 1, 0, false),
                    bn3: BatchNorm::new(store, rng, &format!("{p}.bn3"), out),
                    downsample,
                });
                inplanes = out;
            }
            layers.push(layer);
        }
        Self { conv1, bn1, layers }
    }

    fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Vec<Var> {
        let mut x = self.conv1.forward(g, x);
        x = self.bn1.forward(g, x);
        x = g.relu(x);
        x = g.max_pool2d(x, 3, 2, 1, false);
        let mut outs = Vec::with_capacity(4);
        for layer in &self.layers {
            for block in layer {
                x = block.forward(g, x);
            }
            outs.push(x);
        }
        outs
    }
}

#[derive(Clone, Debug)]
pub struct DenseLayer {
    norm1: BatchNorm,
    conv1: Conv,
    norm2: BatchNorm,
    conv2: Conv,
}

#[derive(Clone, Debug)]
pub struct Transition {
    norm: BatchNorm,
    conv: Conv,
}

/// DenseNet with blocks (6, 12, 24, 16), growth 32, bottleneck width 4·32.
#[derive(Clone, Debug)]
pub struct DenseNet121 {
    conv0: Conv,
    norm0: BatchNorm,
    blocks: Vec<Vec<DenseLayer>>,
    transitions: Vec<Transition>,
    norm5: BatchNorm,
}

impl DenseNet121 {
    const GROWTH: usize = 32;
    const BN_SIZE: usize = 4;

    pub fn new<S: Scalar, R: Rng>(store: &mut ParamStore<S>, rng: &mut R) -> Self {
        let conv0 = Conv::new(store, rng, "backbone.conv0", 3, 64, 7, 2, 3, false);
        let norm0 = BatchNorm::new(store, rng, "backbone.norm0", 64);
        let mut c = 64;
        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        let config = [6, 12, 24, 16];
        for (bi, &n) in config.iter().enumerate() {
            let mut block = Vec::new();
            for li in 0..n {
                let p = format!("backbone.denseblock{}.layer{}", bi + 1, li + 1);
                let mid = Self::BN_SIZE * Self::GROWTH;
                block.push(DenseLayer {
                    norm1: BatchNorm::new(store, rng, &format!("{p}.norm1"), c),
                    conv1: Conv::new(store, rng, &format!("{p}.conv1"), c, mid, 1, 1, 0, false),
                    norm2: BatchNorm::new(store, rng, &format!("{p}.norm2"), mid),
                    conv2: Conv::new(store, rng, &format!("{p}.conv2"), mid, Self::GROWTH, 3, 1, 1, false),
                });
                c += Self::GROWTH;
            }
            blocks.push(block);
            if bi + 1 < config.len() {
                let p = format!("backbone.transition{}", bi + 1);
                transitions.push(Transition {
                    norm: BatchNorm::new(store, rng, &format!("{p}.norm"), c),
                    conv: Conv::new(store, rng, &format!("{p}.conv"), c, c / 2, 1, 1, 0, false),
                });
                c /= 2;
            }
        }
        let norm5 = BatchNorm::new(store, rng, "backbone.norm5", c);
        Self {
            conv0,
            norm0,
            blocks,
            transitions,
            norm5,
        }
    }

    fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Vec<Var> {
        let mut x = self.conv0.forward(g, x);
        x = self.norm0.forward(g, x);
        x = g.relu(x);
        x = g.max_pool2d(x, 3, 2, 1, false);
        let mut outs = Vec::with_capacity(4);
        for (bi, block) in self.blocks.iter().enumerate() {
            for layer in block {
                let mut y = layer.norm1.forward(g, x);
                y = g.relu(y);
                y = layer.conv1.forward(g, y);
                y = layer.norm2.forward(g, y);
                y = g.relu(y);
                y = layer.conv2.forward(g, y);
                x = g.concat(&[x, y], 1);
            }
            if let Some(t) = self.transitions.get(bi) {
                outs.push(x);
                x = t.norm.forward(g, x);
                x = g.relu(x);
                x = t.conv.forward(g, x);
                x = g.avg_pool2d(x, 2, 2);
            }
        }
        x = self.norm5.forward(g, x);
        x = g.relu(x);
        outs.push(x);
        outs
    }
}
