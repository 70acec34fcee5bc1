//! Baseband I/Q generator for digital modulation datasets.
//!
//! Linear schemes use rectangular pulses (one constellation point held for
//! `samples_per_symbol` samples). CPFSK integrates its phase sample by sample.
//! No carrier, phase or timing offsets are applied.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{LabeledSignalSet, SignalRecord};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// CPFSK modulation index.
pub const CPFSK_INDEX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModulationScheme {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    #[serde(rename = "PAM4")]
    Pam4,
    #[serde(rename = "QAM16")]
    Qam16,
    #[serde(rename = "CPFSK")]
    Cpfsk,
}

impl ModulationScheme {
    pub const ALL: [ModulationScheme; 6] = [
        ModulationScheme::Bpsk,
        ModulationScheme::Qpsk,
        ModulationScheme::Psk8,
        ModulationScheme::Pam4,
        ModulationScheme::Qam16,
        ModulationScheme::Cpfsk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Bpsk => "BPSK",
            ModulationScheme::Qpsk => "QPSK",
            ModulationScheme::Psk8 => "8PSK",
            ModulationScheme::Pam4 => "PAM4",
            ModulationScheme::Qam16 => "QAM16",
            ModulationScheme::Cpfsk => "CPFSK",
        }
    }

    pub fn alphabet_size(self) -> usize {
        match self {
            ModulationScheme::Bpsk | ModulationScheme::Cpfsk => 2,
            ModulationScheme::Qpsk | ModulationScheme::Pam4 => 4,
            ModulationScheme::Psk8 => 8,
            ModulationScheme::Qam16 => 16,
        }
    }

    pub fn is_linear(self) -> bool {
        self != ModulationScheme::Cpfsk
    }

    /// Constellation point `(I, Q)` for a symbol of a linear scheme, Gray-mapped
    /// and scaled to unit average power. `None` for CPFSK or out-of-range symbols.
    pub fn constellation_point(self, symbol: usize) -> Option<(f64, f64)> {
        if symbol >= self.alphabet_size() {
            return None;
        }
        // Gray-coded amplitude levels for a 4-level axis.
        const LEVELS4: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];
        let point = match self {
            ModulationScheme::Bpsk => (if symbol == 0 { 1.0 } else { -1.0 }, 0.0),
            ModulationScheme::Qpsk => {
                let i = if symbol & 1 == 0 { 1.0 } else { -1.0 };
                let q = if symbol & 2 == 0 { 1.0 } else { -1.0 };
                (i * FRAC_1_SQRT_2, q * FRAC_1_SQRT_2)
            }
            ModulationScheme::Psk8 => {
                let k = gray_decode(symbol) as f64;
                let phase = 2.0 * PI * k / 8.0;
                (phase.cos(), phase.sin())
            }
            ModulationScheme::Pam4 => (LEVELS4[symbol] / 5f64.sqrt(), 0.0),
            ModulationScheme::Qam16 => {
                let scale = 10f64.sqrt();
                (LEVELS4[symbol & 3] / scale, LEVELS4[symbol >> 2] / scale)
            }
            ModulationScheme::Cpfsk => return None,
        };
        Some(point)
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModulationScheme::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown modulation scheme {s:?}")))
    }
}

/// Noise level for [`add_awgn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Snr {
    Db(i32),
    /// No noise is added; the record passes through unchanged.
    Noiseless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub schemes: Vec<ModulationScheme>,
    pub n_per_class: usize,
    pub n_samples: usize,
    pub samples_per_symbol: usize,
    pub snr_db_min: i32,
    pub snr_db_max: i32,
    pub snr_db_step: i32,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            schemes: ModulationScheme::ALL.to_vec(),
            n_per_class: 1250,
            n_samples: 128,
            samples_per_symbol: 8,
            snr_db_min: 10,
            snr_db_max: 18,
            snr_db_step: 2,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::validation("at least one modulation scheme is required"));
        }
        for (k, s) in self.schemes.iter().enumerate() {
            if self.schemes[..k].contains(s) {
                return Err(Error::validation(format!("scheme {s} listed twice")));
            }
        }
        if self.samples_per_symbol == 0 || self.n_samples == 0 {
            return Err(Error::validation("record length and samples per symbol must be positive"));
        }
        if !self.n_samples.is_multiple_of(self.samples_per_symbol) {
            return Err(Error::validation(format!(
                "record length {} is not divisible by samples per symbol {}",
                self.n_samples, self.samples_per_symbol
            )));
        }
        if self.snr_db_step <= 0 || self.snr_db_min > self.snr_db_max {
            return Err(Error::validation(format!(
                "empty SNR range [{}, {}] step {}",
                self.snr_db_min, self.snr_db_max, self.snr_db_step
            )));
        }
        if self.snr_db_min <= i16::MIN as i32 || self.snr_db_max > i16::MAX as i32 {
            return Err(Error::validation("SNR range must fit in an i16"));
        }
        Ok(())
    }

    pub fn snr_values(&self) -> Vec<i32> {
        (self.snr_db_min..=self.snr_db_max)
            .step_by(self.snr_db_step as usize)
            .collect()
    }
}

/// Map a symbol stream to a baseband waveform. The returned record has label 0
/// and no SNR.
pub fn modulate(
    scheme: ModulationScheme,
    symbols: &[usize],
    samples_per_symbol: usize,
) -> Result<SignalRecord> {
    if samples_per_symbol == 0 {
        return Err(Error::validation("samples per symbol must be positive"));
    }
    if let Some(&bad) = symbols.iter().find(|&&s| s >= scheme.alphabet_size()) {
        return Err(Error::validation(format!(
            "symbol {bad} outside the {scheme} alphabet of size {}",
            scheme.alphabet_size()
        )));
    }
    let len = symbols.len() * samples_per_symbol;
    let mut i = Vec::with_capacity(len);
    let mut q = Vec::with_capacity(len);
    if scheme.is_linear() {
        for &s in symbols {
            let (pi, pq) = scheme.constellation_point(s).expect("validated symbol");
            for _ in 0..samples_per_symbol {
                i.push(pi as f32);
                q.push(pq as f32);
            }
        }
    } else {
        // Binary CPFSK: symbol 0 -> -1, symbol 1 -> +1 frequency deviation.
        let step = PI * CPFSK_INDEX / samples_per_symbol as f64;
        let mut phase = 0.0f64;
        for &s in symbols {
            let a = if s == 0 { -1.0 } else { 1.0 };
            for _ in 0..samples_per_symbol {
                phase += a * step;
                i.push(phase.cos() as f32);
                q.push(phase.sin() as f32);
            }
        }
    }
    Ok(SignalRecord::new(i, q, 0))
}

/// Add complex white Gaussian noise with total power `P_signal / 10^(snr/10)`
/// split evenly over I and Q.
pub fn add_awgn<R: Rng + ?Sized>(record: &SignalRecord, snr: Snr, rng: &mut R) -> Result<SignalRecord> {
    let snr_db = match snr {
        Snr::Noiseless => return Ok(record.clone()),
        Snr::Db(db) => db,
    };
    let signal_power = record.power();
    if signal_power.is_nan() || signal_power <= 0.0 {
        return Err(Error::validation("cannot set an SNR on a zero-power record"));
    }
    let snr_i16 = i16::try_from(snr_db)
        .ok()
        .filter(|&v| v != i16::MIN)
        .ok_or_else(|| Error::validation(format!("SNR {snr_db} dB out of range")))?;
    let noise_power = signal_power / 10f64.powf(snr_db as f64 / 10.0);
    let sigma = (noise_power / 2.0).sqrt();
    let mut noisy = |x: &[f32]| -> Vec<f32> {
        x.iter()
            .map(|&v| {
                let n: f64 = rng.sample(StandardNormal);
                (v as f64 + sigma * n) as f32
            })
            .collect()
    };
    let i = noisy(&record.i);
    let q = noisy(&record.q);
    Ok(SignalRecord {
        i,
        q,
        label: record.label,
        snr_db: Some(snr_i16),
    })
}

/// Generate `n_per_class` noisy records per scheme. Each class draws from its
/// own seeded stream, so the output depends only on the config.
pub fn generate_dataset(cfg: &GenConfig) -> Result<LabeledSignalSet> {
    cfg.validate()?;
    let snrs = cfg.snr_values();
    let n_symbols = cfg.n_samples / cfg.samples_per_symbol;
    let mut records = Vec::with_capacity(cfg.n_per_class * cfg.schemes.len());
    for (label, &scheme) in cfg.schemes.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, Stream::Generate, label as u64);
        let alphabet = scheme.alphabet_size();
        for _ in 0..cfg.n_per_class {
            let symbols: Vec<usize> = (0..n_symbols).map(|_| rng.random_range(0..alphabet)).collect();
            let snr = snrs[rng.random_range(0..snrs.len())];
            let clean = modulate(scheme, &symbols, cfg.samples_per_symbol)?;
            let mut rec = add_awgn(&clean, Snr::Db(snr), &mut rng)?;
            rec.label = label;
            records.push(rec);
        }
    }
    let names = cfg.schemes.iter().map(|s| s.name().to_owned()).collect();
    LabeledSignalSet::new(names, cfg.n_samples, records)
}
