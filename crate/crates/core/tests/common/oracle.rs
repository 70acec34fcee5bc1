//! Straight-line reference implementations that share no code with the
//! library: direct DFT sums, nested-loop network layers and the matching
//! losses written out per class.

use std::f64::consts::PI;

use sigdistill_core::{EmbeddingNet, Layer};

/// `|Σ_n x(n) e^{-j2πkn/N}|` by direct summation.
pub fn brute_dft_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Feature map as `channels × length`.
type Map = Vec<Vec<f64>>;

fn conv(x: &Map, w: &[f64], b: &[f64], c_out: usize, k: usize, stride: usize, pad: usize) -> Map {
    let c_in = x.len();
    let l = x[0].len();
    let l_out = (l + 2 * pad - k) / stride + 1;
    let mut out = vec![vec![0.0; l_out]; c_out];
    for (f, row) in out.iter_mut().enumerate() {
        for (t, y) in row.iter_mut().enumerate() {
            let mut acc = b[f];
            for (c, xc) in x.iter().enumerate() {
                for j in 0..k {
                    let pos = (t * stride + j) as isize - pad as isize;
                    if pos >= 0 && (pos as usize) < l {
                        acc += w[(f * c_in + c) * k + j] * xc[pos as usize];
                    }
                }
            }
            *y = acc;
        }
    }
    out
}

fn relu(x: Map) -> Map {
    x.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
}

fn pool(x: &Map, width: usize, stride: usize) -> Map {
    x.iter()
        .map(|r| {
            (0..(r.len() - width) / stride + 1)
                .map(|t| r[t * stride..t * stride + width].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect()
        })
        .collect()
}

/// Embedding of one record given as `[i, q]`.
pub fn embed(net: &EmbeddingNet<f64>, record: &[Vec<f64>]) -> Vec<f64> {
    let params: Vec<&[f64]> = net.params().iter().map(|t| t.data()).collect();
    let mut p = 0;
    let mut h: Map = record.to_vec();
    for layer in net.arch().layers() {
        h = match *layer {
            Layer::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let out = conv(&h, params[p], params[p + 1], out_channels, kernel, stride, padding);
                p += 2;
                out
            }
            Layer::Relu => relu(h),
            Layer::MaxPool { width, stride } => pool(&h, width, stride),
            Layer::Residual { kernel } => {
                let c = h.len();
                let t = relu(conv(&h, params[p], params[p + 1], c, kernel, 1, kernel / 2));
                let t = conv(&t, params[p + 2], params[p + 3], c, kernel, 1, kernel / 2);
                p += 4;
                let sum: Map = t.iter().zip(&h).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
                relu(sum)
            }
        };
    }
    h.concat()
}

fn mean_embedding(net: &EmbeddingNet<f64>, batch: &[Vec<Vec<f64>>], freq: bool) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for record in batch {
        let input: Vec<Vec<f64>> = if freq {
            record.iter().map(|ch| brute_dft_magnitude(ch)).collect()
        } else {
            record.clone()
        };
        let e = embed(net, &input);
        if acc.is_empty() {
            acc = vec![0.0; e.len()];
        }
        acc.iter_mut().zip(&e).for_each(|(a, v)| *a += v);
    }
    acc.iter().map(|a| a / batch.len() as f64).collect()
}

/// `Σ_c ‖mean ψ(real_c) − mean ψ(synth_c)‖²`, optionally on DFT magnitudes.
/// `real[c]` and `synth[c]` hold the records of class `c` as `[i, q]`.
pub fn matching_loss(net: &EmbeddingNet<f64>, real: &[Vec<Vec<Vec<f64>>>], synth: &[Vec<Vec<Vec<f64>>>], freq: bool) -> f64 {
    real.iter()
        .zip(synth)
        .map(|(r, s)| {
            let (mr, ms) = (mean_embedding(net, r, freq), mean_embedding(net, s, freq));
            mr.iter().zip(&ms).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}
