//! Parameter handles for the layers used by the detector. Each layer only
//! stores [`ParamId`]s; values live in the shared [`ParamStore`].

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::params::{Init, ParamId, ParamKind, ParamStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let weight = store.register(
            format!("{name}.weight"),
            &[cout, cin, k, k],
            ParamKind::Trainable,
            Init::HeNormal { fan_in: cin * k * k },
            rng,
        );
        let bias =
            bias.then(|| store.register(format!("{name}.bias"), &[cout], ParamKind::Trainable, Init::Zeros, rng));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new<S: Scalar, R: Rng>(store: &mut ParamStore<S>, rng: &mut R, name: &str, c: usize) -> Self {
        Self {
            gamma: store.register(
                format!("{name}.weight"),
                &[c],
                ParamKind::Trainable,
                Init::Constant(1.0),
                rng,
            ),
            beta: store.register(format!("{name}.bias"), &[c], ParamKind::Trainable, Init::Zeros, rng),
            running_mean: store.register(
                format!("{name}.running_mean"),
                &[c],
                ParamKind::Buffer,
                Init::Zeros,
                rng,
            ),
            running_var: store.register(
                format!("{name}.running_var"),
                &[c],
                ParamKind::Buffer,
                Init::Constant(1.0),
                rng,
            ),
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.batch_norm2d(
            x,
            gamma,
            beta,
            (self.running_mean, self.running_var),
            Self::MOMENTUM,
            Self::EPS,
        )
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    /// Weights and bias uniform in `±1/sqrt(in_features)`.
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        input: usize,
        output: usize,
    ) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self::with_init(
            store,
            rng,
            name,
            input,
            output,
            Init::Uniform { bound },
            Init::Uniform { bound },
        )
    }

    pub fn with_init<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        input: usize,
        output: usize,
        weight: Init,
        bias: Init,
    ) -> Self {
        Self {
            weight: store.register(
                format!("{name}.weight"),
                &[output, input],
                ParamKind::Trainable,
                weight,
                rng,
            ),
            bias: store.register(format!("{name}.bias"), &[output], ParamKind::Trainable, bias, rng),
            in_features: input,
            out_features: output,
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.linear(x, w, Some(b))
    }
}

/// One direction of one GRU layer. Gate order in the stacked weights is
/// reset, update, candidate:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z  = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl GruCell {
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        let init = Init::Uniform {
            bound: 1.0 / (hidden as f64).sqrt(),
        };
        Self {
            w_ih: store.register(
                format!("{name}.w_ih"),
                &[3 * hidden, input],
                ParamKind::Trainable,
                init,
                rng,
            ),
            w_hh: store.register(
                format!("{name}.w_hh"),
                &[3 * hidden, hidden],
                ParamKind::Trainable,
                init,
                rng,
            ),
            b_ih: store.register(format!("{name}.b_ih"), &[3 * hidden], ParamKind::Trainable, init, rng),
            b_hh: store.register(format!("{name}.b_hh"), &[3 * hidden], ParamKind::Trainable, init, rng),
            input_size: input,
            hidden_size: hidden,
        }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        3 * hidden * (input + hidden + 2)
    }

    /// Runs the cell over `steps` (each `[B, input]`) in the given order
    /// and returns the hidden state after each step, aligned with `steps`.
    pub fn run<S: Scalar>(&self, g: &mut Graph<'_, S>, steps: &[Var], reverse: bool) -> Vec<Var> {
        let batch = g.shape(steps[0])[0];
        let h3 = 3 * self.hidden_size;
        let hs = self.hidden_size;
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let b_ih = g.param(self.b_ih);
        let b_hh = g.param(self.b_hh);
        let mut h = g.input(Tensor::zeros(&[batch, hs]));
        let mut out = vec![h; steps.len()];
        let order: Vec<usize> = if reverse {
            (0..steps.len()).rev().collect()
        } else {
            (0..steps.len()).collect()
        };
        for t in order {
            let gi = g.linear(steps[t], w_ih, Some(b_ih));
            let gh = g.linear(h, w_hh, Some(b_hh));
            debug_assert_eq!(g.shape(gi), &[batch, h3]);
            let (ir, iz, in_) = (
                g.slice(gi, 1, 0, hs),
                g.slice(gi, 1, hs, hs),
                g.slice(gi, 1, 2 * hs, hs),
            );
            let (hr, hz, hn) = (
                g.slice(gh, 1, 0, hs),
                g.slice(gh, 1, hs, hs),
                g.slice(gh, 1, 2 * hs, hs),
            );
            let r = g.add(ir, hr);
            let r = g.sigmoid(r);
            let z = g.add(iz, hz);
            let z = g.sigmoid(z);
            let rn = g.mul(r, hn);
            let n = g.add(in_, rn);
            let n = g.tanh(n);
            // h' = n + z ⊙ (h − n)
            let d = g.sub(h, n);
            let zd = g.mul(z, d);
            h = g.add(n, zd);
            out[t] = h;
        }
        out
    }
}
