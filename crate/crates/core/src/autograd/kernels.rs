//! Forward and backward kernels for the spatial operators. All tensors are
//! NCHW. Work is split per image with rayon; reductions over the batch are
//! accumulated in fixed-size groups and then summed in index order so the
//! result does not depend on the thread count.

use rayon::prelude::*;

use crate::tensor::{gemm, Scalar};

/// Images per partial-sum group for batch reductions.
const REDUCE_GROUP: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<S: Scalar>(x: &[S], s: &ConvShape, col: &mut [S]) {
    let (ho, wo) = (s.out_h(), s.out_w());
    let plane = ho * wo;
    for c in 0..s.cin {
        let xc = &x[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ki in 0..s.kh {
            for kj in 0..s.kw {
                let row = (c * s.kh + ki) * s.kw + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ki) as isize - s.pad as isize;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= s.h as isize {
                        drow.fill(S::zero());
                        continue;
                    }
                    let src = &xc[iy as usize * s.w..(iy as usize + 1) * s.w];
                    if s.stride == 1 {
                        let shift = kj as isize - s.pad as isize;
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = ox as isize + shift;
                            *d = if ix < 0 || ix >= s.w as isize {
                                S::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s.stride + kj) as isize - s.pad as isize;
                            *d = if ix < 0 || ix >= s.w as isize {
                                S::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

fn col2im<S: Scalar>(col: &[S], s: &ConvShape, dx: &mut [S]) {
    let (ho, wo) = (s.out_h(), s.out_w());
    let plane = ho * wo;
    for c in 0..s.cin {
        let dxc = &mut dx[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ki in 0..s.kh {
            for kj in 0..s.kw {
                let row = (c * s.kh + ki) * s.kw + kj;
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ki) as isize - s.pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let drow = &mut dxc[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for ox in 0..wo {
                        let ix = (ox * s.stride + kj) as isize - s.pad as isize;
                        if ix >= 0 && ix < s.w as isize {
                            drow[ix as usize] = drow[ix as usize] + src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<S: Scalar>(x: &[S], w: &[S], b: Option<&[S]>, s: &ConvShape) -> Vec<S> {
    let (ho, wo) = (s.out_h(), s.out_w());
    let plane = ho * wo;
    let in_img = s.cin * s.h * s.w;
    let mut out = vec![S::zero(); s.n * s.cout * plane];
    out.par_chunks_mut(s.cout * plane)
        .enumerate()
        .for_each_init(Vec::new, |col, (n, y)| {
            let xi = &x[n * in_img..(n + 1) * in_img];
            let cols: &[S] = if s.is_pointwise() {
                xi
            } else {
                col.resize(s.k() * plane, S::zero());
                im2col(xi, s, col);
                col
            };
            gemm(s.cout, s.k(), plane, w, false, cols, false, y, false);
            if let Some(b) = b {
                for (co, yc) in y.chunks_mut(plane).enumerate() {
                    let bias = b[co];
                    yc.iter_mut().for_each(|v| *v = *v + bias);
                }
            }
        });
    out
}

pub struct ConvGrads<S> {
    pub dx: Option<Vec<S>>,
    pub dw: Vec<S>,
    pub db: Vec<S>,
}

pub fn conv2d_backward<S: Scalar>(x: &[S], w: &[S], dy: &[S], s: &ConvShape, need_dx: bool) -> ConvGrads<S> {
    let (ho, wo) = (s.out_h(), s.out_w());
    let plane = ho * wo;
    let in_img = s.cin * s.h * s.w;
    let out_img = s.cout * plane;
    let k = s.k();

    let mut dx = if need_dx {
        Some(vec![S::zero(); s.n * in_img])
    } else {
        None
    };

    // Input gradient: independent per image.
    if let Some(dx) = dx.as_mut() {
        dx.par_chunks_mut(in_img)
            .enumerate()
            .for_each_init(Vec::new, |dcol, (n, dxi)| {
                let dyi = &dy[n * out_img..(n + 1) * out_img];
                if s.is_pointwise() {
                    gemm(k, s.cout, plane, w, true, dyi, false, dxi, false);
                } else {
                    dcol.resize(k * plane, S::zero());
                    gemm(k, s.cout, plane, w, true, dyi, false, dcol, false);
                    col2im(dcol, s, dxi);
                }
            });
    }

    // Weight and bias gradients: grouped partial sums.
    let groups: Vec<(Vec<S>, Vec<S>)> = (0..s.n.div_ceil(REDUCE_GROUP))
        .into_par_iter()
        .map(|g| {
            let mut dw = vec![S::zero(); s.cout * k];
            let mut db = vec![S::zero(); s.cout];
            let mut col = Vec::new();
            for n in g * REDUCE_GROUP..((g + 1) * REDUCE_GROUP).min(s.n) {
                let xi = &x[n * in_img..(n + 1) * in_img];
                let dyi = &dy[n * out_img..(n + 1) * out_img];
                let cols: &[S] = if s.is_pointwise() {
                    xi
                } else {
                    col.resize(k * plane, S::zero());
                    im2col(xi, s, &mut col);
                    &col
                };
                gemm(s.cout, plane, k, dyi, false, cols, true, &mut dw, true);
                for (co, dyc) in dyi.chunks(plane).enumerate() {
                    db[co] = db[co] + dyc.iter().copied().sum::<S>();
                }
            }
            (dw, db)
        })
        .collect();

    let mut dw = vec![S::zero(); s.cout * k];
    let mut db = vec![S::zero(); s.cout];
    for (gw, gb) in groups {
        for (a, b) in dw.iter_mut().zip(gw) {
            *a = *a + b;
        }
        for (a, b) in db.iter_mut().zip(gb) {
            *a = *a + b;
        }
    }
    ConvGrads { dx, dw, db }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolShape {
    pub planes: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ceil: bool,
}

impl PoolShape {
    fn out_len(&self, len: usize) -> usize {
        // Inputs smaller than the window pool to a single clipped window.
        if len + 2 * self.pad < self.k {
            return 1;
        }
        let span = len + 2 * self.pad - self.k;
        let mut out = if self.ceil {
            span.div_ceil(self.stride) + 1
        } else {
            span / self.stride + 1
        };
        // A window must start inside the input or left padding.
        if self.ceil && (out - 1) * self.stride >= len + self.pad {
            out -= 1;
        }
        out
    }

    pub fn out_h(&self) -> usize {
        self.out_len(self.h)
    }

    pub fn out_w(&self) -> usize {
        self.out_len(self.w)
    }
}

/// Returns pooled values and the flat in-plane index of each maximum.
pub fn maxpool_forward<S: Scalar>(x: &[S], s: &PoolShape) -> (Vec<S>, Vec<u32>) {
    let (ho, wo) = (s.out_h(), s.out_w());
    let mut out = vec![S::zero(); s.planes * ho * wo];
    let mut arg = vec![0u32; s.planes * ho * wo];
    out.par_chunks_mut(ho * wo)
        .zip(arg.par_chunks_mut(ho * wo))
        .enumerate()
        .for_each(|(p, (o, a))| {
            let xp = &x[p * s.h * s.w..(p + 1) * s.h * s.w];
            for oy in 0..ho {
                let y0 = (oy * s.stride) as isize - s.pad as isize;
                for ox in 0..wo {
                    let x0 = (ox * s.stride) as isize - s.pad as isize;
                    let mut best = S::neg_infinity();
                    let mut best_i = 0u32;
                    for iy in y0.max(0)..(y0 + s.k as isize).min(s.h as isize) {
                        for ix in x0.max(0)..(x0 + s.k as isize).min(s.w as isize) {
                            let idx = iy as usize * s.w + ix as usize;
                            if xp[idx] > best {
                                best = xp[idx];
                                best_i = idx as u32;
                            }
                        }
                    }
                    o[oy * wo + ox] = best;
                    a[oy * wo + ox] = best_i;
                }
            }
        });
    (out, arg)
}

pub fn maxpool_backward<S: Scalar>(dy: &[S], arg: &[u32], s: &PoolShape) -> Vec<S> {
    let out_plane = s.out_h() * s.out_w();
    let mut dx = vec![S::zero(); s.planes * s.h * s.w];
    dx.par_chunks_mut(s.h * s.w).enumerate().for_each(|(p, d)| {
        let range = p * out_plane..(p + 1) * out_plane;
        for (&g, &i) in dy[range.clone()].iter().zip(&arg[range]) {
            d[i as usize] = d[i as usize] + g;
        }
    });
    dx
}

/// Averages over `[start, end)` bins per output cell; covers plain
/// non-overlapping average pooling and adaptive pooling.
#[derive(Clone, Debug)]
pub struct AvgBins {
    pub rows: Vec<(usize, usize)>,
    pub cols: Vec<(usize, usize)>,
}

impl AvgBins {
    pub fn strided(h: usize, w: usize, k: usize, stride: usize) -> Self {
        let rows = (0..(h - k) / stride + 1)
            .map(|i| (i * stride, i * stride + k))
            .collect();
        let cols = (0..(w - k) / stride + 1)
            .map(|i| (i * stride, i * stride + k))
            .collect();
        Self { rows, cols }
    }

    pub fn adaptive(h: usize, w: usize, oh: usize, ow: usize) -> Self {
        let bins = |len: usize, out: usize| {
            (0..out)
                .map(|i| ((i * len) / out, ((i + 1) * len).div_ceil(out)))
                .collect()
        };
        Self {
            rows: bins(h, oh),
            cols: bins(w, ow),
        }
    }
}

pub fn avgpool_forward<S: Scalar>(x: &[S], planes: usize, h: usize, w: usize, bins: &AvgBins) -> Vec<S> {
    let (ho, wo) = (bins.rows.len(), bins.cols.len());
    let mut out = vec![S::zero(); planes * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(p, o)| {
        let xp = &x[p * h * w..(p + 1) * h * w];
        for (oy, &(r0, r1)) in bins.rows.iter().enumerate() {
            for (ox, &(c0, c1)) in bins.cols.iter().enumerate() {
                let mut acc = S::zero();
                for iy in r0..r1 {
                    for ix in c0..c1 {
                        acc = acc + xp[iy * w + ix];
                    }
                }
                o[oy * wo + ox] = acc / S::from_usize((r1 - r0) * (c1 - c0));
            }
        }
    });
    out
}

pub fn avgpool_backward<S: Scalar>(dy: &[S], planes: usize, h: usize, w: usize, bins: &AvgBins) -> Vec<S> {
    let (ho, wo) = (bins.rows.len(), bins.cols.len());
    let mut dx = vec![S::zero(); planes * h * w];
    dx.par_chunks_mut(h * w).enumerate().for_each(|(p, d)| {
        let g = &dy[p * ho * wo..(p + 1) * ho * wo];
        for (oy, &(r0, r1)) in bins.rows.iter().enumerate() {
            for (ox, &(c0, c1)) in bins.cols.iter().enumerate() {
                let share = g[oy * wo + ox] / S::from_usize((r1 - r0) * (c1 - c0));
                for iy in r0..r1 {
                    for ix in c0..c1 {
                        d[iy * w + ix] = d[iy * w + ix] + share;
                    }
                }
            }
        }
    });
    dx
}

/// Per-channel statistics for batch normalisation over N, H and W.
pub fn channel_moments<S: Scalar>(x: &[S], n: usize, c: usize, plane: usize) -> (Vec<S>, Vec<S>) {
    let count = S::from_usize(n * plane);
    let mut mean = vec![S::zero(); c];
    let mut var = vec![S::zero(); c];
    for ch in 0..c {
        let mut acc = S::zero();
        for img in 0..n {
            let off = (img * c + ch) * plane;
            acc = acc + x[off..off + plane].iter().copied().sum::<S>();
        }
        let m = acc / count;
        let mut sq = S::zero();
        for img in 0..n {
            let off = (img * c + ch) * plane;
            sq = sq + x[off..off + plane].iter().map(|&v| (v - m) * (v - m)).sum::<S>();
        }
        mean[ch] = m;
        var[ch] = sq / count;
    }
    (mean, var)
}

/// Bilinear sampling geometry shared by the forward and backward passes of
/// the affine grid sampler. Normalised coordinates use pixel centres
/// (`x_norm = (2j + 1) / W - 1`).
#[inline]
fn sample_point<S: Scalar>(theta: &[S], i: usize, j: usize, h: usize, w: usize) -> (S, S, S, S) {
    let two = S::from_f64(2.0);
    let xn = S::from_usize(2 * j + 1) / S::from_usize(w) - S::one();
    let yn = S::from_usize(2 * i + 1) / S::from_usize(h) - S::one();
    let xs = theta[0] * xn + theta[1] * yn + theta[2];
    let ys = theta[3] * xn + theta[4] * yn + theta[5];
    let px = ((xs + S::one()) * S::from_usize(w) - S::one()) / two;
    let py = ((ys + S::one()) * S::from_usize(h) - S::one()) / two;
    (xn, yn, px, py)
}

#[inline]
fn fetch<S: Scalar>(plane: &[S], h: usize, w: usize, y: isize, x: isize) -> S {
    if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
        S::zero()
    } else {
        plane[y as usize * w + x as usize]
    }
}

pub fn grid_sample_forward<S: Scalar>(x: &[S], theta: &[S], n: usize, c: usize, h: usize, w: usize) -> Vec<S> {
    let img = c * h * w;
    let mut out = vec![S::zero(); n * img];
    out.par_chunks_mut(img).enumerate().for_each(|(b, o)| {
        let th = &theta[b * 6..b * 6 + 6];
        let xi = &x[b * img..(b + 1) * img];
        for i in 0..h {
            for j in 0..w {
                let (_, _, px, py) = sample_point(th, i, j, h, w);
                let fx = px.floor();
                let fy = py.floor();
                let ax = px - fx;
                let ay = py - fy;
                let (x0, y0) = (fx.as_f64() as isize, fy.as_f64() as isize);
                for ch in 0..c {
                    let plane = &xi[ch * h * w..(ch + 1) * h * w];
                    let v00 = fetch(plane, h, w, y0, x0);
                    let v01 = fetch(plane, h, w, y0, x0 + 1);
                    let v10 = fetch(plane, h, w, y0 + 1, x0);
                    let v11 = fetch(plane, h, w, y0 + 1, x0 + 1);
                    let top = v00 + (v01 - v00) * ax;
                    let bottom = v10 + (v11 - v10) * ax;
                    o[ch * h * w + i * w + j] = top + (bottom - top) * ay;
                }
            }
        }
    });
    out
}

/// Returns `(dx, dtheta)`.
#[allow(clippy::too_many_arguments)]
pub fn grid_sample_backward<S: Scalar>(
    x: &[S],
    theta: &[S],
    dy: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    need_dx: bool,
) -> (Option<Vec<S>>, Vec<S>) {
    let img = c * h * w;
    let half_w = S::from_usize(w) / S::from_f64(2.0);
    let half_h = S::from_usize(h) / S::from_f64(2.0);
    let results: Vec<(Option<Vec<S>>, [S; 6])> = (0..n)
        .into_par_iter()
        .map(|b| {
            let th = &theta[b * 6..b * 6 + 6];
            let xi = &x[b * img..(b + 1) * img];
            let dyi = &dy[b * img..(b + 1) * img];
            let mut dxi = if need_dx { Some(vec![S::zero(); img]) } else { None };
            let mut dth = [S::zero(); 6];
            for i in 0..h {
                for j in 0..w {
                    let (xn, yn, px, py) = sample_point(th, i, j, h, w);
                    let fx = px.floor();
                    let fy = py.floor();
                    let ax = px - fx;
                    let ay = py - fy;
                    let (x0, y0) = (fx.as_f64() as isize, fy.as_f64() as isize);
                    let mut dpx = S::zero();
                    let mut dpy = S::zero();
                    for ch in 0..c {
                        let g = dyi[ch * h * w + i * w + j];
                        if g == S::zero() {
                            continue;
                        }
                        let plane = &xi[ch * h * w..(ch + 1) * h * w];
                        let v00 = fetch(plane, h, w, y0, x0);
                        let v01 = fetch(plane, h, w, y0, x0 + 1);
                        let v10 = fetch(plane, h, w, y0 + 1, x0);
                        let v11 = fetch(plane, h, w, y0 + 1, x0 + 1);
                        dpx = dpx + g * ((v01 - v00) * (S::one() - ay) + (v11 - v10) * ay);
                        dpy = dpy + g * ((v10 - v00) * (S::one() - ax) + (v11 - v01) * ax);
                        if let Some(d) = dxi.as_mut() {
                            let dp = &mut d[ch * h * w..(ch + 1) * h * w];
                            let corners = [
                                (y0, x0, (S::one() - ax) * (S::one() - ay)),
                                (y0, x0 + 1, ax * (S::one() - ay)),
                                (y0 + 1, x0, (S::one() - ax) * ay),
                                (y0 + 1, x0 + 1, ax * ay),
                            ];
                            for (yy, xx, wt) in corners {
                                if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                                    let idx = yy as usize * w + xx as usize;
                                    dp[idx] = dp[idx] + g * wt;
                                }
                            }
                        }
                    }
                    let dxs = dpx * half_w;
                    let dys = dpy * half_h;
                    dth[0] = dth[0] + dxs * xn;
                    dth[1] = dth[1] + dxs * yn;
                    dth[2] = dth[2] + dxs;
                    dth[3] = dth[3] + dys * xn;
                    dth[4] = dth[4] + dys * yn;
                    dth[5] = dth[5] + dys;
                }
            }
            (dxi, dth)
        })
        .collect();

    let mut dtheta = Vec::with_capacity(n * 6);
    let mut dx = if need_dx {
        Some(Vec::with_capacity(n * img))
    } else {
        None
    };
    for (dxi, dth) in results {
        dtheta.extend_from_slice(&dth);
        if let (Some(dx), Some(dxi)) = (dx.as_mut(), dxi) {
            dx.extend(dxi);
        }
    }
    (dx, dtheta)
}
