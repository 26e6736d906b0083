//! Raw slice kernels behind the differentiable primitives.
//!
//! Every kernel writes each output element from exactly one task with a fixed
//! summation order, so results are identical for any rayon thread count.

use rayon::prelude::*;

use super::Float;

/// Work (in multiply-adds) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel_h) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel_w) / self.stride + 1
    }

    fn macs(&self) -> usize {
        self.batch
            * self.out_channels
            * self.in_channels
            * self.kernel_h
            * self.kernel_w
            * self.out_height()
            * self.out_width()
    }

    /// Output columns `[lo, hi)` whose input column `ox*stride + j - pad` is in bounds.
    fn col_range(&self, j: usize) -> (usize, usize) {
        let wo = self.out_width();
        let s = self.stride;
        let lo = if self.pad > j {
            (self.pad - j).div_ceil(s)
        } else {
            0
        };
        let reach = self.width + self.pad;
        if reach <= j {
            return (0, 0);
        }
        let hi = ((reach - 1 - j) / s + 1).min(wo);
        (lo.min(hi), hi)
    }

    /// Input row for output row `oy` and kernel row `i`, if in bounds.
    fn in_row(&self, oy: usize, i: usize) -> Option<usize> {
        let y = oy * self.stride + i;
        (y >= self.pad && y - self.pad < self.height).then(|| y - self.pad)
    }
}

fn axpy(dst: &mut [Float], alpha: Float, src: &[Float]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

fn dot(a: &[Float], b: &[Float]) -> Float {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Accumulates `alpha * input[ix]` into `out_row[ox]` for the strided column map.
fn strided_axpy(
    out_row: &mut [Float],
    in_row: &[Float],
    alpha: Float,
    g: &ConvGeometry,
    j: usize,
    (lo, hi): (usize, usize),
) {
    if lo >= hi {
        return;
    }
    if g.stride == 1 {
        let start = lo + j - g.pad;
        axpy(&mut out_row[lo..hi], alpha, &in_row[start..start + (hi - lo)]);
    } else {
        for ox in lo..hi {
            out_row[ox] += alpha * in_row[ox * g.stride + j - g.pad];
        }
    }
}

/// Cross-correlation `out[n,k] = bias[k] + sum_c weight[k,c] ⋆ input[n,c]`.
pub fn conv2d_forward(
    input: &[Float],
    weight: &[Float],
    bias: Option<&[Float]>,
    g: &ConvGeometry,
) -> Vec<Float> {
    let (ho, wo) = (g.out_height(), g.out_width());
    let plane = ho * wo;
    let in_plane = g.height * g.width;
    let ksize = g.kernel_h * g.kernel_w;
    let mut out = vec![0.0; g.batch * g.out_channels * plane];

    let job = |(idx, out_plane): (usize, &mut [Float])| {
        let (n, k) = (idx / g.out_channels, idx % g.out_channels);
        if let Some(b) = bias {
            out_plane.fill(b[k]);
        }
        for c in 0..g.in_channels {
            let src = &input[(n * g.in_channels + c) * in_plane..][..in_plane];
            let wk = &weight[(k * g.in_channels + c) * ksize..][..ksize];
            for oy in 0..ho {
                let out_row = &mut out_plane[oy * wo..(oy + 1) * wo];
                for i in 0..g.kernel_h {
                    let Some(iy) = g.in_row(oy, i) else { continue };
                    let in_row = &src[iy * g.width..(iy + 1) * g.width];
                    for j in 0..g.kernel_w {
                        let range = g.col_range(j);
                        strided_axpy(out_row, in_row, wk[i * g.kernel_w + j], g, j, range);
                    }
                }
            }
        }
    };

    if g.macs() >= PAR_THRESHOLD {
        out.par_chunks_mut(plane).enumerate().for_each(job);
    } else {
        out.chunks_mut(plane).enumerate().for_each(job);
    }
    out
}

/// Gradients of [`conv2d_forward`]: `(d_input, d_weight, d_bias)`.
/// `d_input` is skipped when `want_input` is false.
pub fn conv2d_backward(
    input: &[Float],
    weight: &[Float],
    grad_out: &[Float],
    g: &ConvGeometry,
    want_input: bool,
) -> (Option<Vec<Float>>, Vec<Float>, Vec<Float>) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let plane = ho * wo;
    let in_plane = g.height * g.width;
    let ksize = g.kernel_h * g.kernel_w;
    let parallel = g.macs() >= PAR_THRESHOLD;

    let d_input = want_input.then(|| {
        let mut d_in = vec![0.0; g.batch * g.in_channels * in_plane];
        let job = |(idx, din_plane): (usize, &mut [Float])| {
            let (n, c) = (idx / g.in_channels, idx % g.in_channels);
            for k in 0..g.out_channels {
                let go = &grad_out[(n * g.out_channels + k) * plane..][..plane];
                let wk = &weight[(k * g.in_channels + c) * ksize..][..ksize];
                for oy in 0..ho {
                    let go_row = &go[oy * wo..(oy + 1) * wo];
                    for i in 0..g.kernel_h {
                        let Some(iy) = g.in_row(oy, i) else { continue };
                        let din_row = &mut din_plane[iy * g.width..(iy + 1) * g.width];
                        for j in 0..g.kernel_w {
                            let w = wk[i * g.kernel_w + j];
                            let (lo, hi) = g.col_range(j);
                            if lo >= hi {
                                continue;
                            }
                            if g.stride == 1 {
                                let start = lo + j - g.pad;
                                axpy(&mut din_row[start..start + (hi - lo)], w, &go_row[lo..hi]);
                            } else {
                                for ox in lo..hi {
                                    din_row[ox * g.stride + j - g.pad] += w * go_row[ox];
                                }
                            }
                        }
                    }
                }
            }
        };
        if parallel {
            d_in.par_chunks_mut(in_plane).enumerate().for_each(job);
        } else {
            d_in.chunks_mut(in_plane).enumerate().for_each(job);
        }
        d_in
    });

    let mut d_weight = vec![0.0; g.out_channels * g.in_channels * ksize];
    let job = |(k, dw_k): (usize, &mut [Float])| {
        for n in 0..g.batch {
            let go = &grad_out[(n * g.out_channels + k) * plane..][..plane];
            for c in 0..g.in_channels {
                let src = &input[(n * g.in_channels + c) * in_plane..][..in_plane];
                let dw = &mut dw_k[c * ksize..(c + 1) * ksize];
                for oy in 0..ho {
                    let go_row = &go[oy * wo..(oy + 1) * wo];
                    for i in 0..g.kernel_h {
                        let Some(iy) = g.in_row(oy, i) else { continue };
                        let in_row = &src[iy * g.width..(iy + 1) * g.width];
                        for j in 0..g.kernel_w {
                            let (lo, hi) = g.col_range(j);
                            if lo >= hi {
                                continue;
                            }
                            let acc = if g.stride == 1 {
                                let start = lo + j - g.pad;
                                dot(&go_row[lo..hi], &in_row[start..start + (hi - lo)])
                            } else {
                                (lo..hi)
                                    .map(|ox| go_row[ox] * in_row[ox * g.stride + j - g.pad])
                                    .sum()
                            };
                            dw[i * g.kernel_w + j] += acc;
                        }
                    }
                }
            }
        }
    };
    let chunk = g.in_channels * ksize;
    if parallel {
        d_weight.par_chunks_mut(chunk).enumerate().for_each(job);
    } else {
        d_weight.chunks_mut(chunk).enumerate().for_each(job);
    }

    let mut d_bias = vec![0.0; g.out_channels];
    for n in 0..g.batch {
        for (k, db) in d_bias.iter_mut().enumerate() {
            *db += grad_out[(n * g.out_channels + k) * plane..][..plane]
                .iter()
                .sum::<Float>();
        }
    }
    (d_input, d_weight, d_bias)
}

/// 2×2 non-overlapping max pool over `planes` planes of `h×w`.
/// Returns the pooled values and, per output, the flat input index of the
/// first maximum in row-major window order.
pub fn maxpool2_forward(input: &[Float], planes: usize, h: usize, w: usize) -> (Vec<Float>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// `out[n,:] = bias + input[n,:] · weight` with `weight` stored `[d_in, d_out]`.
pub fn linear_forward(
    input: &[Float],
    weight: &[Float],
    bias: Option<&[Float]>,
    rows: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<Float> {
    let mut out = vec![0.0; rows * d_out];
    for (n, out_row) in out.chunks_mut(d_out).enumerate() {
        if let Some(b) = bias {
            out_row.copy_from_slice(b);
        }
        let x = &input[n * d_in..(n + 1) * d_in];
        for (d, &xv) in x.iter().enumerate() {
            if xv != 0.0 {
                axpy(out_row, xv, &weight[d * d_out..(d + 1) * d_out]);
            }
        }
    }
    out
}

/// Gradients of [`linear_forward`]: `(d_input, d_weight, d_bias)`.
pub fn linear_backward(
    input: &[Float],
    weight: &[Float],
    grad_out: &[Float],
    rows: usize,
    d_in: usize,
    d_out: usize,
    want_input: bool,
) -> (Option<Vec<Float>>, Vec<Float>, Vec<Float>) {
    let parallel = rows * d_in * d_out >= PAR_THRESHOLD;

    let d_input = want_input.then(|| {
        let mut d_x = vec![0.0; rows * d_in];
        for (n, dx_row) in d_x.chunks_mut(d_in).enumerate() {
            let go = &grad_out[n * d_out..(n + 1) * d_out];
            let job = |(d, v): (usize, &mut Float)| *v = dot(go, &weight[d * d_out..(d + 1) * d_out]);
            if parallel {
                dx_row.par_iter_mut().enumerate().for_each(job);
            } else {
                dx_row.iter_mut().enumerate().for_each(job);
            }
        }
        d_x
    });

    let mut d_weight = vec![0.0; d_in * d_out];
    let job = |(d, dw_row): (usize, &mut [Float])| {
        for n in 0..rows {
            let xv = input[n * d_in + d];
            if xv != 0.0 {
                axpy(dw_row, xv, &grad_out[n * d_out..(n + 1) * d_out]);
            }
        }
    };
    if parallel {
        d_weight.par_chunks_mut(d_out).enumerate().for_each(job);
    } else {
        d_weight.chunks_mut(d_out).enumerate().for_each(job);
    }

    let mut d_bias = vec![0.0; d_out];
    for go in grad_out.chunks(d_out) {
        for (db, g) in d_bias.iter_mut().zip(go) {
            *db += g;
        }
    }
    (d_input, d_weight, d_bias)
}
