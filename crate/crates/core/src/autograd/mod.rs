//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward and
//! backward pass. Every operator appends a node; [`Graph::backward`] walks the
//! tape in reverse and returns gradients for every parameter that took part.

pub mod kernels;

use std::collections::{HashMap, HashSet};

use crate::params::{ParamId, ParamStore};
use crate::tensor::{gemm, Scalar, Tensor};
use kernels::{AvgBins, ConvShape, PoolShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<S> {
    Owned(Tensor<S>),
    Param(ParamId),
}

enum Op<S> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        shape: ConvShape,
    },
    Relu(Var),
    MaxPool {
        x: Var,
        shape: PoolShape,
        arg: Vec<u32>,
    },
    AvgPool {
        x: Var,
        planes: usize,
        h: usize,
        w: usize,
        bins: AvgBins,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<S>,
        invstd: Vec<S>,
        batch_stats: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    GridSample {
        x: Var,
        theta: Var,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<S>,
    },
}

struct Node<S> {
    value: Value<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Split of a shape around `axis`: (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub struct Graph<'p, S: Scalar> {
    store: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
    param_nodes: HashMap<ParamId, Var>,
    frozen: HashSet<ParamId>,
    training: bool,
    buffer_updates: Vec<(ParamId, Tensor<S>)>,
}

impl<'p, S: Scalar> Graph<'p, S> {
    /// `training` selects batch statistics in batch normalisation.
    pub fn new(store: &'p ParamStore<S>, training: bool) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            frozen: HashSet::new(),
            training,
            buffer_updates: Vec::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &'p ParamStore<S> {
        self.store
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is tracked (used for input-gradient checks).
    pub fn variable(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Treat these parameters as constants. Call before they enter the
    /// graph; the backward pass then skips everything that only feeds them.
    pub fn freeze(&mut self, ids: impl IntoIterator<Item = ParamId>) {
        self.frozen.extend(ids);
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: !self.frozen.contains(&id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    /// Running-statistic updates produced by batch normalisation in
    /// training mode; apply them after the step.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor<S>)> {
        std::mem::take(&mut self.buffer_updates)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 4, "conv2d expects NCHW input");
        assert_eq!(ws[1], xs[1], "conv2d channel mismatch");
        let shape = ConvShape {
            n: xs[0],
            cin: xs[1],
            h: xs[2],
            w: xs[3],
            cout: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
        };
        let bias = b.map(|b| self.value(b).data());
        let out = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), bias, &shape);
        let t = Tensor::from_vec(&[shape.n, shape.cout, shape.out_h(), shape.out_w()], out);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(t, Op::Conv2d { x, w, b, shape }, &inputs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.max(S::zero()));
        self.push(t, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(stable_sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.tanh());
        self.push(t, Op::Tanh(x), &[x])
    }

    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize, ceil: bool) -> Var {
        let xs = self.shape(x).to_vec();
        let shape = PoolShape {
            planes: xs[0] * xs[1],
            h: xs[2],
            w: xs[3],
            k,
            stride,
            pad,
            ceil,
        };
        let (out, arg) = kernels::maxpool_forward(self.value(x).data(), &shape);
        let t = Tensor::from_vec(&[xs[0], xs[1], shape.out_h(), shape.out_w()], out);
        self.push(t, Op::MaxPool { x, shape, arg }, &[x])
    }

    fn avg_bins(&mut self, x: Var, bins: AvgBins) -> Var {
        let xs = self.shape(x).to_vec();
        let planes = xs[0] * xs[1];
        let out = kernels::avgpool_forward(self.value(x).data(), planes, xs[2], xs[3], &bins);
        let t = Tensor::from_vec(&[xs[0], xs[1], bins.rows.len(), bins.cols.len()], out);
        self.push(
            t,
            Op::AvgPool {
                x,
                planes,
                h: xs[2],
                w: xs[3],
                bins,
            },
            &[x],
        )
    }

    pub fn avg_pool2d(&mut self, x: Var, k: usize, stride: usize) -> Var {
        let xs = self.shape(x).to_vec();
        self.avg_bins(x, AvgBins::strided(xs[2], xs[3], k, stride))
    }

    pub fn adaptive_avg_pool2d(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let xs = self.shape(x).to_vec();
        self.avg_bins(x, AvgBins::adaptive(xs[2], xs[3], oh, ow))
    }

    /// NCHW → NC.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let pooled = self.adaptive_avg_pool2d(x, 1, 1);
        self.reshape(pooled, &[xs[0], xs[1]])
    }

    /// Batch normalisation over N, H, W. `running` holds the mean and
    /// variance buffers.
    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (ParamId, ParamId),
        momentum: f64,
        eps: f64,
    ) -> Var {
        let xs = self.shape(x).to_vec();
        let (n, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
        let eps = S::from_f64(eps);
        let (mean, var) = if self.training {
            let (mean, var) = kernels::channel_moments(self.value(x).data(), n, c, plane);
            let m = S::from_f64(momentum);
            let count = n * plane;
            let unbias = if count > 1 {
                S::from_usize(count) / S::from_usize(count - 1)
            } else {
                S::one()
            };
            let rm = self.store.get(running.0);
            let rv = self.store.get(running.1);
            let new_mean: Vec<S> = rm
                .data()
                .iter()
                .zip(&mean)
                .map(|(&r, &b)| (S::one() - m) * r + m * b)
                .collect();
            let new_var: Vec<S> = rv
                .data()
                .iter()
                .zip(&var)
                .map(|(&r, &b)| (S::one() - m) * r + m * b * unbias)
                .collect();
            self.buffer_updates.push((running.0, Tensor::from_vec(&[c], new_mean)));
            self.buffer_updates.push((running.1, Tensor::from_vec(&[c], new_var)));
            (mean, var)
        } else {
            (
                self.store.get(running.0).data().to_vec(),
                self.store.get(running.1).data().to_vec(),
            )
        };
        let invstd: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let xd = self.value(x).data();
        let mut out = vec![S::zero(); xd.len()];
        for img in 0..n {
            for ch in 0..c {
                let off = (img * c + ch) * plane;
                let scale = g[ch] * invstd[ch];
                let shift = b[ch] - mean[ch] * scale;
                for (o, &v) in out[off..off + plane].iter_mut().zip(&xd[off..off + plane]) {
                    *o = v * scale + shift;
                }
            }
        }
        let t = Tensor::from_vec(&xs, out);
        let batch_stats = self.training;
        self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                invstd,
                batch_stats,
            },
            &[x, gamma, beta],
        )
    }

    fn elementwise(&mut self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        Tensor::from_vec(
            ta.shape(),
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.elementwise(a, b, |x, y| x + y);
        self.push(t, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.elementwise(a, b, |x, y| x - y);
        self.push(t, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.elementwise(a, b, |x, y| x * y);
        self.push(t, Op::Mul(a, b), &[a, b])
    }

    /// `x: [N, in]`, `w: [out, in]`, `b: [out]` → `[N, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 2, "linear expects a matrix input");
        assert_eq!(xs[1], ws[1], "linear input width mismatch");
        let (n, fin, fout) = (xs[0], xs[1], ws[0]);
        let mut out = vec![S::zero(); n * fout];
        gemm(
            n,
            fin,
            fout,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            &mut out,
            false,
        );
        if let Some(b) = b {
            let bd = self.value(b).data();
            for row in out.chunks_mut(fout) {
                for (o, &bv) in row.iter_mut().zip(bd) {
                    *o = *o + bv;
                }
            }
        }
        let t = Tensor::from_vec(&[n, fout], out);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(t, Op::Linear { x, w, b }, &inputs)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = self.shape(parts[0]).to_vec();
        let (outer, _, inner) = split_axis(&first, axis);
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            for (d, (&a, &b)) in s.iter().zip(&first).enumerate() {
                assert!(d == axis || a == b, "concat shape mismatch off-axis");
            }
            total += s[axis];
        }
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let t = Tensor::from_vec(&shape, out);
        self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        )
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let xs = self.shape(x).to_vec();
        assert!(start + len <= xs[axis], "slice out of range");
        let (outer, full, inner) = split_axis(&xs, axis);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = xs;
        shape[axis] = len;
        let t = Tensor::from_vec(&shape, out);
        self.push(t, Op::Slice { x, axis, start }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshape(shape);
        self.push(t, Op::Reshape(x), &[x])
    }

    /// Affine grid generation plus bilinear sampling with zero padding.
    /// `x: [N, C, H, W]`, `theta: [N, 6]` row-major 2×3 affine in
    /// normalised coordinates. Output has the input's spatial size.
    pub fn grid_sample(&mut self, x: Var, theta: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(self.shape(theta), &[xs[0], 6], "theta must be [N, 6]");
        let out = kernels::grid_sample_forward(
            self.value(x).data(),
            self.value(theta).data(),
            xs[0],
            xs[1],
            xs[2],
            xs[3],
        );
        let t = Tensor::from_vec(&xs, out);
        self.push(t, Op::GridSample { x, theta }, &[x, theta])
    }

    /// Mean binary cross-entropy of `logits: [N]` against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[S]) -> Var {
        let z = self.value(logits).data();
        assert_eq!(z.len(), targets.len(), "one target per logit");
        let n = S::from_usize(z.len());
        let total: S = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(S::zero()) - z * y + (S::one() + (-z.abs()).exp()).ln())
            .sum();
        let t = Tensor::scalar(total / n);
        self.push(
            t,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        )
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<S> {
        assert_eq!(self.value(loss).numel(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(self.value(loss).shape(), vec![S::one()]));

        for idx in (0..self.nodes.len()).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(gy);
                continue;
            }
            for (v, g) in self.local_grads(idx, &gy) {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }

        let params = self
            .param_nodes
            .iter()
            .filter_map(|(&id, &v)| grads[v.0].take().map(|g| (id, g)))
            .collect();
        let leaves = grads
            .into_iter()
            .enumerate()
            .filter_map(|(i, g)| g.map(|g| (Var(i), g)))
            .collect();
        Gradients { params, leaves }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, idx: usize, gy: &Tensor<S>) -> Vec<(Var, Tensor<S>)> {
        let node = &self.nodes[idx];
        let y = match &node.value {
            Value::Owned(t) => t,
            Value::Param(_) => unreachable!("parameters are leaves"),
        };
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, shape } => {
                let g = kernels::conv2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy.data(),
                    shape,
                    self.needs(*x),
                );
                let mut out = vec![(*w, Tensor::from_vec(self.shape(*w), g.dw))];
                if let Some(b) = b {
                    out.push((*b, Tensor::from_vec(self.shape(*b), g.db)));
                }
                if let Some(dx) = g.dx {
                    out.push((*x, Tensor::from_vec(self.shape(*x), dx)));
                }
                out
            }
            Op::Relu(x) => {
                let d = y
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&o, &g)| if o > S::zero() { g } else { S::zero() })
                    .collect();
                vec![(*x, Tensor::from_vec(y.shape(), d))]
            }
            Op::Sigmoid(x) => {
                let d = y
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&s, &g)| g * s * (S::one() - s))
                    .collect();
                vec![(*x, Tensor::from_vec(y.shape(), d))]
            }
            Op::Tanh(x) => {
                let d = y
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&t, &g)| g * (S::one() - t * t))
                    .collect();
                vec![(*x, Tensor::from_vec(y.shape(), d))]
            }
            Op::MaxPool { x, shape, arg } => {
                let dx = kernels::maxpool_backward(gy.data(), arg, shape);
                vec![(*x, Tensor::from_vec(self.shape(*x), dx))]
            }
            Op::AvgPool { x, planes, h, w, bins } => {
                let dx = kernels::avgpool_backward(gy.data(), *planes, *h, *w, bins);
                vec![(*x, Tensor::from_vec(self.shape(*x), dx))]
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                invstd,
                batch_stats,
            } => self.batch_norm_backward(*x, *gamma, *beta, mean, invstd, *batch_stats, gy),
            Op::Add(a, b) => vec![(*a, gy.clone()), (*b, gy.clone())],
            Op::Sub(a, b) => vec![(*a, gy.clone()), (*b, gy.map(|g| -g))],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = gy.data().iter().zip(vb.data()).map(|(&g, &v)| g * v).collect();
                let db = gy.data().iter().zip(va.data()).map(|(&g, &v)| g * v).collect();
                vec![
                    (*a, Tensor::from_vec(va.shape(), da)),
                    (*b, Tensor::from_vec(vb.shape(), db)),
                ]
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let (n, fin, fout) = (xs[0], xs[1], ws[0]);
                let mut out = Vec::with_capacity(3);
                let mut dw = vec![S::zero(); fout * fin];
                gemm(
                    fout,
                    n,
                    fin,
                    gy.data(),
                    true,
                    self.value(*x).data(),
                    false,
                    &mut dw,
                    false,
                );
                out.push((*w, Tensor::from_vec(ws, dw)));
                if let Some(b) = b {
                    let mut db = vec![S::zero(); fout];
                    for row in gy.data().chunks(fout) {
                        for (d, &g) in db.iter_mut().zip(row) {
                            *d = *d + g;
                        }
                    }
                    out.push((*b, Tensor::from_vec(&[fout], db)));
                }
                if self.needs(*x) {
                    let mut dx = vec![S::zero(); n * fin];
                    gemm(
                        n,
                        fout,
                        fin,
                        gy.data(),
                        false,
                        self.value(*w).data(),
                        false,
                        &mut dx,
                        false,
                    );
                    out.push((*x, Tensor::from_vec(xs, dx)));
                }
                out
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(y.shape(), *axis);
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let ps = self.shape(p);
                    let len = ps[*axis] * inner;
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(outer * len);
                        for o in 0..outer {
                            let base = o * total * inner + offset;
                            d.extend_from_slice(&gy.data()[base..base + len]);
                        }
                        out.push((p, Tensor::from_vec(ps, d)));
                    }
                    offset += len;
                }
                out
            }
            Op::Slice { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, full, inner) = split_axis(xs, *axis);
                let len = y.shape()[*axis];
                let mut dx = vec![S::zero(); xs.iter().product()];
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&gy.data()[src..src + len * inner]);
                }
                vec![(*x, Tensor::from_vec(xs, dx))]
            }
            Op::Reshape(x) => vec![(*x, gy.clone().reshape(self.shape(*x)))],
            Op::GridSample { x, theta } => {
                let xs = self.shape(*x);
                let (dx, dtheta) = kernels::grid_sample_backward(
                    self.value(*x).data(),
                    self.value(*theta).data(),
                    gy.data(),
                    xs[0],
                    xs[1],
                    xs[2],
                    xs[3],
                    self.needs(*x),
                );
                let mut out = vec![(*theta, Tensor::from_vec(self.shape(*theta), dtheta))];
                if let Some(dx) = dx {
                    out.push((*x, Tensor::from_vec(xs, dx)));
                }
                out
            }
            Op::BceWithLogits { logits, targets } => {
                let z = self.value(*logits);
                let scale = gy.data()[0] / S::from_usize(targets.len());
                let d = z
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &t)| (stable_sigmoid(z) - t) * scale)
                    .collect();
                vec![(*logits, Tensor::from_vec(z.shape(), d))]
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn batch_norm_backward(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[S],
        invstd: &[S],
        batch_stats: bool,
        gy: &Tensor<S>,
    ) -> Vec<(Var, Tensor<S>)> {
        let xs = self.shape(x);
        let (n, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
        let xd = self.value(x).data();
        let g = self.value(gamma).data();
        let dy = gy.data();
        let mut dgamma = vec![S::zero(); c];
        let mut dbeta = vec![S::zero(); c];
        for img in 0..n {
            for ch in 0..c {
                let off = (img * c + ch) * plane;
                for p in off..off + plane {
                    let xhat = (xd[p] - mean[ch]) * invstd[ch];
                    dgamma[ch] = dgamma[ch] + dy[p] * xhat;
                    dbeta[ch] = dbeta[ch] + dy[p];
                }
            }
        }
        let mut out = vec![
            (gamma, Tensor::from_vec(&[c], dgamma.clone())),
            (beta, Tensor::from_vec(&[c], dbeta.clone())),
        ];
        if self.needs(x) {
            let count = S::from_usize(n * plane);
            let mut dx = vec![S::zero(); xd.len()];
            for img in 0..n {
                for ch in 0..c {
                    let off = (img * c + ch) * plane;
                    let k = g[ch] * invstd[ch];
                    for p in off..off + plane {
                        dx[p] = if batch_stats {
                            let xhat = (xd[p] - mean[ch]) * invstd[ch];
                            k * (dy[p] - dbeta[ch] / count - xhat * dgamma[ch] / count)
                        } else {
                            k * dy[p]
                        };
                    }
                }
            }
            out.push((x, Tensor::from_vec(xs, dx)));
        }
        out
    }
}

#[inline]
pub fn stable_sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Output of [`Graph::backward`].
pub struct Gradients<S> {
    params: HashMap<ParamId, Tensor<S>>,
    leaves: HashMap<Var, Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn param(&self, id: ParamId) -> Option<&Tensor<S>> {
        self.params.get(&id)
    }

    pub fn leaf(&self, v: Var) -> Option<&Tensor<S>> {
        self.leaves.get(&v)
    }

    pub fn into_params(self) -> HashMap<ParamId, Tensor<S>> {
        self.params
    }
}
