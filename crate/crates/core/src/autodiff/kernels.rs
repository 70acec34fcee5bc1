//! Slice-level kernels behind the graph ops.
//!
//! Batch elements are processed in parallel. Reductions across the batch
//! (weight and bias gradients) are summed over fixed-size chunks and the
//! partials are combined in chunk order, so results are bit-identical for
//! any thread count.

use rayon::prelude::*;

use crate::real::Real;

const REDUCE_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub l_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub l_out: usize,
}

impl ConvGeom {
    /// Output positions `o` whose tap `k` lands inside the input.
    #[inline]
    fn valid(&self, k: usize) -> (usize, usize) {
        let lo = if self.padding > k {
            (self.padding - k).div_ceil(self.stride)
        } else {
            0
        };
        let reach = self.l_in + self.padding;
        let hi = if reach > k {
            ((reach - 1 - k) / self.stride + 1).min(self.l_out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn in_len(&self) -> usize {
        self.c_in * self.l_in
    }

    fn out_len(&self) -> usize {
        self.c_out * self.l_out
    }
}

pub(crate) fn conv1d_forward<F: Real>(
    g: &ConvGeom,
    x: &[F],
    w: &[F],
    bias: Option<&[F]>,
) -> Vec<F> {
    let mut out = vec![F::zero(); g.batch * g.out_len()];
    out.par_chunks_mut(g.out_len())
        .zip(x.par_chunks(g.in_len()))
        .for_each(|(ob, xb)| {
            for f in 0..g.c_out {
                let orow = &mut ob[f * g.l_out..(f + 1) * g.l_out];
                orow.fill(bias.map_or(F::zero(), |b| b[f]));
                for c in 0..g.c_in {
                    let xrow = &xb[c * g.l_in..(c + 1) * g.l_in];
                    let wrow = &w[(f * g.c_in + c) * g.kernel..(f * g.c_in + c + 1) * g.kernel];
                    for (k, &wv) in wrow.iter().enumerate() {
                        let (lo, hi) = g.valid(k);
                        if g.stride == 1 {
                            let start = lo + k - g.padding;
                            for (y, &xv) in orow[lo..hi].iter_mut().zip(&xrow[start..start + hi - lo]) {
                                *y += wv * xv;
                            }
                        } else {
                            for o in lo..hi {
                                orow[o] += wv * xrow[o * g.stride + k - g.padding];
                            }
                        }
                    }
                }
            }
        });
    out
}

pub(crate) fn conv1d_backward_input<F: Real>(g: &ConvGeom, gy: &[F], w: &[F]) -> Vec<F> {
    let mut gx = vec![F::zero(); g.batch * g.in_len()];
    gx.par_chunks_mut(g.in_len())
        .zip(gy.par_chunks(g.out_len()))
        .for_each(|(gxb, gyb)| {
            for f in 0..g.c_out {
                let grow = &gyb[f * g.l_out..(f + 1) * g.l_out];
                for c in 0..g.c_in {
                    let xrow = &mut gxb[c * g.l_in..(c + 1) * g.l_in];
                    let wrow = &w[(f * g.c_in + c) * g.kernel..(f * g.c_in + c + 1) * g.kernel];
                    for (k, &wv) in wrow.iter().enumerate() {
                        let (lo, hi) = g.valid(k);
                        if g.stride == 1 {
                            let start = lo + k - g.padding;
                            for (xv, &gv) in xrow[start..start + hi - lo].iter_mut().zip(&grow[lo..hi]) {
                                *xv += wv * gv;
                            }
                        } else {
                            for o in lo..hi {
                                xrow[o * g.stride + k - g.padding] += wv * grow[o];
                            }
                        }
                    }
                }
            }
        });
    gx
}

/// Returns `(grad_weight, grad_bias)`.
pub(crate) fn conv1d_backward_params<F: Real>(g: &ConvGeom, gy: &[F], x: &[F]) -> (Vec<F>, Vec<F>) {
    let w_len = g.c_out * g.c_in * g.kernel;
    let partials: Vec<(Vec<F>, Vec<F>)> = gy
        .par_chunks(g.out_len() * REDUCE_CHUNK)
        .zip(x.par_chunks(g.in_len() * REDUCE_CHUNK))
        .map(|(gyc, xc)| {
            let mut gw = vec![F::zero(); w_len];
            let mut gb = vec![F::zero(); g.c_out];
            for (gyb, xb) in gyc.chunks(g.out_len()).zip(xc.chunks(g.in_len())) {
                for f in 0..g.c_out {
                    let grow = &gyb[f * g.l_out..(f + 1) * g.l_out];
                    gb[f] += grow.iter().copied().sum::<F>();
                    for c in 0..g.c_in {
                        let xrow = &xb[c * g.l_in..(c + 1) * g.l_in];
                        let base = (f * g.c_in + c) * g.kernel;
                        for k in 0..g.kernel {
                            let (lo, hi) = g.valid(k);
                            let mut acc = F::zero();
                            if g.stride == 1 {
                                let start = lo + k - g.padding;
                                for (&gv, &xv) in grow[lo..hi].iter().zip(&xrow[start..start + hi - lo]) {
                                    acc += gv * xv;
                                }
                            } else {
                                for o in lo..hi {
                                    acc += grow[o] * xrow[o * g.stride + k - g.padding];
                                }
                            }
                            gw[base + k] += acc;
                        }
                    }
                }
            }
            (gw, gb)
        })
        .collect();
    sum_partials(partials, w_len, g.c_out)
}

fn sum_partials<F: Real>(partials: Vec<(Vec<F>, Vec<F>)>, a_len: usize, b_len: usize) -> (Vec<F>, Vec<F>) {
    let mut a = vec![F::zero(); a_len];
    let mut b = vec![F::zero(); b_len];
    for (pa, pb) in partials {
        a.iter_mut().zip(pa).for_each(|(s, v)| *s += v);
        b.iter_mut().zip(pb).for_each(|(s, v)| *s += v);
    }
    (a, b)
}

/// `x: [batch, d_in]`, `w: [d_in, d_out]`.
pub(crate) fn linear_forward<F: Real>(x: &[F], w: &[F], bias: &[F], d_in: usize, d_out: usize) -> Vec<F> {
    let batch = x.len() / d_in;
    let mut out = vec![F::zero(); batch * d_out];
    out.par_chunks_mut(d_out)
        .zip(x.par_chunks(d_in))
        .for_each(|(row, xr)| {
            row.copy_from_slice(bias);
            for (d, &xv) in xr.iter().enumerate() {
                for (y, &wv) in row.iter_mut().zip(&w[d * d_out..(d + 1) * d_out]) {
                    *y += xv * wv;
                }
            }
        });
    out
}

pub(crate) fn linear_backward_input<F: Real>(gy: &[F], w: &[F], d_in: usize, d_out: usize) -> Vec<F> {
    let batch = gy.len() / d_out;
    let mut gx = vec![F::zero(); batch * d_in];
    gx.par_chunks_mut(d_in)
        .zip(gy.par_chunks(d_out))
        .for_each(|(gxr, gyr)| {
            for (d, gv) in gxr.iter_mut().enumerate() {
                let mut acc = F::zero();
                for (&a, &b) in gyr.iter().zip(&w[d * d_out..(d + 1) * d_out]) {
                    acc += a * b;
                }
                *gv = acc;
            }
        });
    gx
}

pub(crate) fn linear_backward_params<F: Real>(gy: &[F], x: &[F], d_in: usize, d_out: usize) -> (Vec<F>, Vec<F>) {
    let partials: Vec<(Vec<F>, Vec<F>)> = gy
        .par_chunks(d_out * REDUCE_CHUNK)
        .zip(x.par_chunks(d_in * REDUCE_CHUNK))
        .map(|(gyc, xc)| {
            let mut gw = vec![F::zero(); d_in * d_out];
            let mut gb = vec![F::zero(); d_out];
            for (gyr, xr) in gyc.chunks(d_out).zip(xc.chunks(d_in)) {
                gb.iter_mut().zip(gyr).for_each(|(s, &v)| *s += v);
                for (d, &xv) in xr.iter().enumerate() {
                    for (s, &gv) in gw[d * d_out..(d + 1) * d_out].iter_mut().zip(gyr) {
                        *s += xv * gv;
                    }
                }
            }
            (gw, gb)
        })
        .collect();
    sum_partials(partials, d_in * d_out, d_out)
}

/// `x: [rows, len]` pooled along the last axis. Returns values and the flat
/// input index of each maximum (first one on ties).
pub(crate) fn max_pool1d_forward<F: Real>(
    x: &[F],
    len: usize,
    width: usize,
    stride: usize,
    l_out: usize,
) -> (Vec<F>, Vec<u32>) {
    let rows = x.len() / len;
    let mut out = Vec::with_capacity(rows * l_out);
    let mut arg = Vec::with_capacity(rows * l_out);
    for (r, row) in x.chunks(len).enumerate() {
        for o in 0..l_out {
            let start = o * stride;
            let mut best = start;
            for j in start + 1..start + width {
                if row[j] > row[best] {
                    best = j;
                }
            }
            out.push(row[best]);
            arg.push((r * len + best) as u32);
        }
    }
    (out, arg)
}
