//! Per-channel DFT magnitude, `|X[k]| = |Σₙ x[n] e^{-j2πkn/N}|`, without any
//! `1/N` normalization, plus its gradient.
//!
//! Power-of-two lengths use an iterative radix-2 FFT; other lengths fall back
//! to direct summation. All arithmetic is carried out in `f64`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dataio::SignalRecord;
use crate::error::{Error, Result};
use crate::real::Real;

/// Bins with a magnitude below this contribute a zero subgradient.
pub const EPS_MAG: f64 = 1e-12;

/// Frequency-domain view of a record: DFT magnitudes of I and Q.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqRecord {
    pub i_mag: Vec<f32>,
    pub q_mag: Vec<f32>,
    pub label: usize,
}

/// In-place iterative radix-2 FFT (forward, `e^{-j...}` kernel).
fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for k in 0..n {
        let r = k.reverse_bits() >> (usize::BITS - bits);
        if r > k {
            buf.swap(k, r);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / len as f64))
            .collect();
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }
}

fn dft_direct(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    // Indexed by (k*t) mod n, so every angle is reduced before the trig call.
    let twiddles: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64))
        .collect();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(t, x)| x * twiddles[(k * t) % n])
                .sum()
        })
        .collect()
}

/// Complex DFT of a real sequence.
pub fn dft<F: Real>(channel: &[F]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = channel.iter().map(|v| Complex64::new(v.as_f64(), 0.0)).collect();
    if buf.len().is_power_of_two() {
        fft_in_place(&mut buf);
        buf
    } else {
        dft_direct(&buf)
    }
}

fn check_finite<F: Real>(values: &[F], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} contains a non-finite value")))
    }
}

/// `|DFT(x)|` for a single channel.
pub fn dft_magnitude<F: Real>(channel: &[F]) -> Result<Vec<F>> {
    if channel.is_empty() {
        return Err(Error::validation("DFT of an empty channel"));
    }
    check_finite(channel, "DFT input")?;
    Ok(dft(channel).iter().map(|z| F::from_f64(z.norm())).collect())
}

/// Vector-Jacobian product of [`dft_magnitude`]:
/// `grad[n] = Σₖ gₖ · Re(X[k] e^{j2πkn/N}) / |X[k]|`.
///
/// Evaluated as the real part of an unnormalized inverse transform of
/// `gₖ X[k] / |X[k]|`, so it costs one extra FFT.
pub fn dft_magnitude_backward<F: Real>(channel: &[F], upstream: &[F]) -> Result<Vec<F>> {
    if channel.len() != upstream.len() {
        return Err(Error::Shape {
            op: "dft_magnitude_backward",
            lhs: vec![channel.len()],
            rhs: vec![upstream.len()],
        });
    }
    if channel.is_empty() {
        return Err(Error::validation("DFT of an empty channel"));
    }
    check_finite(channel, "DFT input")?;
    check_finite(upstream, "upstream gradient")?;
    let spectrum = dft(channel);
    Ok(magnitude_vjp(&spectrum, upstream))
}

/// Backward pass given a precomputed spectrum.
pub(crate) fn magnitude_vjp<F: Real>(spectrum: &[Complex64], upstream: &[F]) -> Vec<F> {
    // Σₖ Zₖ e^{+j2πkn/N} = conj(Σₖ conj(Zₖ) e^{-j2πkn/N})
    let mut z: Vec<Complex64> = spectrum
        .iter()
        .zip(upstream)
        .map(|(x, g)| {
            let mag = x.norm();
            if mag < EPS_MAG {
                Complex64::new(0.0, 0.0)
            } else {
                (x * (g.as_f64() / mag)).conj()
            }
        })
        .collect();
    if z.len().is_power_of_two() {
        fft_in_place(&mut z);
    } else {
        z = dft_direct(&z);
    }
    // Re(conj(w)) = Re(w)
    z.iter().map(|w| F::from_f64(w.re)).collect()
}

/// Apply [`dft_magnitude`] to both channels of a record.
pub fn to_frequency(record: &SignalRecord) -> Result<FreqRecord> {
    Ok(FreqRecord {
        i_mag: dft_magnitude(&record.i)?,
        q_mag: dft_magnitude(&record.q)?,
        label: record.label,
    })
}
