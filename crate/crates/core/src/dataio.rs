//! Labeled I/Q datasets and the SIGDS binary container.
//!
//! A SIGDS file is little-endian throughout:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"SIGD"`                         |
//! | 4      | 2    | version (`1`)                           |
//! | 6      | 2    | channel count (`2`, I then Q)           |
//! | 8      | 4    | samples per channel `N`                 |
//! | 12     | 4    | record count                            |
//! | 16     | 2    | class count                             |
//! | 18     | 46   | reserved, zero                          |
//!
//! The header is followed by the class table (`u16` length + UTF-8 bytes per
//! class) and then the records: `u16` label, `i16` SNR in dB (`-32768` when
//! absent), `N` `f32` I samples and `N` `f32` Q samples.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, ParseError, Result};
use crate::rng::{stream_rng, Stream};

pub const MAGIC: &[u8; 4] = b"SIGD";
pub const VERSION: u16 = 1;
pub const N_CHANNELS: usize = 2;
pub const HEADER_LEN: usize = 64;
pub const SNR_ABSENT: i16 = i16::MIN;

/// One I/Q record.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub i: Vec<f32>,
    pub q: Vec<f32>,
    pub label: usize,
    pub snr_db: Option<i16>,
}

impl SignalRecord {
    pub fn new(i: Vec<f32>, q: Vec<f32>, label: usize) -> Self {
        SignalRecord {
            i,
            q,
            label,
            snr_db: None,
        }
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Mean of `I² + Q²` over the record.
    pub fn power(&self) -> f64 {
        if self.i.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .i
            .iter()
            .zip(&self.q)
            .map(|(&i, &q)| (i as f64).powi(2) + (q as f64).powi(2))
            .sum();
        sum / self.i.len() as f64
    }
}

/// A validated collection of 2×N records with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSignalSet {
    class_names: Vec<String>,
    n_samples: usize,
    records: Vec<SignalRecord>,
}

impl LabeledSignalSet {
    pub fn new(
        class_names: Vec<String>,
        n_samples: usize,
        records: Vec<SignalRecord>,
    ) -> Result<Self> {
        let set = LabeledSignalSet {
            class_names,
            n_samples,
            records,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::validation("a dataset needs at least one class"));
        }
        if self.class_names.len() > u16::MAX as usize {
            return Err(Error::validation("too many classes for SIGDS"));
        }
        let mut seen = HashSet::new();
        for name in &self.class_names {
            if name.is_empty() {
                return Err(Error::validation("class names must be non-empty"));
            }
            if name.len() > u16::MAX as usize {
                return Err(Error::validation(format!("class name too long: {name}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::validation(format!("duplicate class name {name:?}")));
            }
        }
        if self.n_samples == 0 || self.n_samples > u32::MAX as usize {
            return Err(Error::validation(format!(
                "invalid samples per channel {}",
                self.n_samples
            )));
        }
        for (idx, rec) in self.records.iter().enumerate() {
            if rec.i.len() != self.n_samples || rec.q.len() != self.n_samples {
                return Err(Error::validation(format!(
                    "record {idx} has channel lengths {}/{} (expected {})",
                    rec.i.len(),
                    rec.q.len(),
                    self.n_samples
                )));
            }
            if rec.label >= self.class_names.len() {
                return Err(Error::validation(format!(
                    "record {idx} has label {} but only {} classes exist",
                    rec.label,
                    self.class_names.len()
                )));
            }
            if !rec.i.iter().chain(&rec.q).all(|v| v.is_finite()) {
                return Err(Error::validation(format!(
                    "record {idx} contains a non-finite sample"
                )));
            }
            if rec.snr_db == Some(SNR_ABSENT) {
                return Err(Error::validation(format!(
                    "record {idx} uses the reserved SNR value {SNR_ABSENT}"
                )));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Samples per channel, `N`.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_channels(&self) -> usize {
        N_CHANNELS
    }

    pub fn records(&self) -> &[SignalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Record counts per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for rec in &self.records {
            counts[rec.label] += 1;
        }
        counts
    }

    /// Indices of the records of each class, in storage order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_names.len()];
        for (idx, rec) in self.records.iter().enumerate() {
            out[rec.label].push(idx);
        }
        out
    }

    /// Same classes and length, different records.
    pub fn with_records(&self, records: Vec<SignalRecord>) -> Result<Self> {
        LabeledSignalSet::new(self.class_names.clone(), self.n_samples, records)
    }

    pub fn into_records(self) -> Vec<SignalRecord> {
        self.records
    }

    /// FNV-1a over the encoded container; used to prove a set was not mutated.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in encode(self) {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        hash
    }
}

/// A set whose classes each hold exactly `spc` records, stored class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    base: LabeledSignalSet,
    spc: usize,
}

impl SyntheticSet {
    pub fn new(base: LabeledSignalSet, spc: usize) -> Result<Self> {
        if spc == 0 {
            return Err(Error::validation("signals per class must be at least 1"));
        }
        let counts = base.class_counts();
        if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c != spc) {
            return Err(Error::validation(format!(
                "class {} has {count} records, expected {spc}",
                base.class_names[class]
            )));
        }
        Ok(SyntheticSet { base, spc })
    }

    pub fn spc(&self) -> usize {
        self.spc
    }

    pub fn as_set(&self) -> &LabeledSignalSet {
        &self.base
    }

    pub fn into_set(self) -> LabeledSignalSet {
        self.base
    }
}

impl std::ops::Deref for SyntheticSet {
    type Target = LabeledSignalSet;

    fn deref(&self) -> &LabeledSignalSet {
        &self.base
    }
}

/// Serialize a set into SIGDS bytes.
pub fn encode(set: &LabeledSignalSet) -> Vec<u8> {
    let n = set.n_samples;
    let names_len: usize = set.class_names.iter().map(|c| 2 + c.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + names_len + set.len() * (4 + 8 * n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(N_CHANNELS as u16).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.class_names.len() as u16).to_le_bytes());
    out.resize(HEADER_LEN, 0);
    for name in &set.class_names {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for rec in &set.records {
        out.extend_from_slice(&(rec.label as u16).to_le_bytes());
        out.extend_from_slice(&rec.snr_db.unwrap_or(SNR_ABSENT).to_le_bytes());
        for v in rec.i.iter().chain(&rec.q) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let bytes = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(bytes)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }
}

/// Parse SIGDS bytes.
pub fn decode(bytes: &[u8]) -> Result<LabeledSignalSet, ParseError> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(ParseError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ParseError::TruncatedHeader);
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(ParseError::UnsupportedVersion(version));
    }
    let channels = u16_at(6);
    if channels as usize != N_CHANNELS {
        return Err(ParseError::ChannelCount(channels));
    }
    let n = u32_at(8) as usize;
    let record_count = u32_at(12) as usize;
    let class_count = u16_at(16) as usize;
    if bytes[18..HEADER_LEN].iter().any(|&b| b != 0) {
        return Err(ParseError::ReservedNonZero);
    }

    let mut cur = Cursor {
        buf: bytes,
        pos: HEADER_LEN,
    };
    let mut class_names = Vec::with_capacity(class_count);
    for idx in 0..class_count {
        let len = cur.u16().ok_or(ParseError::TruncatedClassTable)? as usize;
        let raw = cur.take(len).ok_or(ParseError::TruncatedClassTable)?;
        let name = std::str::from_utf8(raw).map_err(|_| ParseError::ClassNameEncoding(idx))?;
        class_names.push(name.to_owned());
    }

    let record_len = 4 + 8 * n;
    let mut records = Vec::with_capacity(record_count.min(bytes.len() / record_len.max(1)));
    for rec_idx in 0..record_count {
        let raw = cur.take(record_len).ok_or(ParseError::TruncatedPayload {
            record: rec_idx,
            declared: record_count,
        })?;
        let label = u16::from_le_bytes([raw[0], raw[1]]) as usize;
        if label >= class_count {
            return Err(ParseError::LabelOutOfRange {
                record: rec_idx,
                label,
                classes: class_count,
            });
        }
        let snr = i16::from_le_bytes([raw[2], raw[3]]);
        let mut samples = raw[4..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let i: Vec<f32> = samples.by_ref().take(n).collect();
        let q: Vec<f32> = samples.collect();
        if !i.iter().chain(&q).all(|v| v.is_finite()) {
            return Err(ParseError::NonFiniteSample(rec_idx));
        }
        records.push(SignalRecord {
            i,
            q,
            label,
            snr_db: (snr != SNR_ABSENT).then_some(snr),
        });
    }
    if cur.pos != bytes.len() {
        return Err(ParseError::TrailingBytes(bytes.len() - cur.pos));
    }
    Ok(LabeledSignalSet {
        class_names,
        n_samples: n,
        records,
    })
}

pub fn save_sigds(set: &LabeledSignalSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    set.validate()?;
    fs::write(path, encode(set)).map_err(|e| Error::io(path, e))
}

pub fn load_sigds(path: impl AsRef<Path>) -> Result<LabeledSignalSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = decode(&bytes).map_err(|source| Error::Parse {
        path: path.to_owned(),
        source,
    })?;
    // Structural checks the byte parser cannot express (duplicate names, N = 0).
    set.validate()?;
    Ok(set)
}

/// Stratified split: per class, `floor(test_fraction * count)` records go to the
/// test side, clamped so both sides keep at least one record. Both outputs keep
/// the input's record order.
pub fn split_train_test(
    set: &LabeledSignalSet,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledSignalSet, LabeledSignalSet)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let by_class = set.indices_by_class();
    let mut is_test = vec![false; set.len()];
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::validation(format!(
                "class {} has {} records; a split needs at least 2",
                set.class_names[class],
                members.len()
            )));
        }
        let n_test = ((test_fraction * members.len() as f64).floor() as usize)
            .clamp(1, members.len() - 1);
        let mut rng = stream_rng(seed, Stream::Split, class as u64);
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &idx in &shuffled[..n_test] {
            is_test[idx] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (rec, &t) in set.records.iter().zip(&is_test) {
        if t {
            test.push(rec.clone());
        } else {
            train.push(rec.clone());
        }
    }
    Ok((set.with_records(train)?, set.with_records(test)?))
}

/// Uniformly sample `spc` records per class without replacement.
///
/// This initializes distillation and is also the random-selection baseline.
pub fn take_per_class(set: &LabeledSignalSet, spc: usize, seed: u64) -> Result<SyntheticSet> {
    if spc == 0 {
        return Err(Error::validation("signals per class must be at least 1"));
    }
    let by_class = set.indices_by_class();
    let mut records = Vec::with_capacity(spc * by_class.len());
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < spc {
            return Err(Error::validation(format!(
                "class {} has {} records, fewer than the {spc} requested",
                set.class_names[class],
                members.len()
            )));
        }
        let mut rng = stream_rng(seed, Stream::Select, class as u64);
        for pick in index::sample(&mut rng, members.len(), spc) {
            records.push(set.records[members[pick]].clone());
        }
    }
    SyntheticSet::new(set.with_records(records)?, spc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, label: usize, offset: f32) -> SignalRecord {
        SignalRecord {
            i: (0..n).map(|k| k as f32 + offset).collect(),
            q: (0..n).map(|k| -(k as f32) * 0.5 - offset).collect(),
            label,
            snr_db: Some(10),
        }
    }

    fn toy(per_class: usize, classes: usize, n: usize) -> LabeledSignalSet {
        let names = (0..classes).map(|c| format!("C{c}")).collect();
        let recs = (0..classes * per_class)
            .map(|k| record(n, k % classes, k as f32))
            .collect();
        LabeledSignalSet::new(names, n, recs).unwrap()
    }

    #[test]
    fn empty_set_encodes_header_and_class_table_only() {
        let set = LabeledSignalSet::new(vec!["BPSK".into()], 128, vec![]).unwrap();
        let bytes = encode(&set);
        assert_eq!(bytes.len(), HEADER_LEN + 2 + 4);
        assert_eq!(&bytes[..4], b"SIGD");
        assert_eq!(decode(&bytes).unwrap(), set);
    }

    #[test]
    fn payload_size_matches_layout() {
        let set = toy(1, 2, 4);
        let bytes = encode(&set);
        let table = 2 * (2 + 2);
        let payload = bytes.len() - HEADER_LEN - table;
        // Two records, each with a 4-byte prefix and 2 * 4 * 4 sample bytes.
        assert_eq!(payload - 2 * 4, 2 * 2 * 4 * 4);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode(&toy(1, 1, 4));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(ParseError::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let set = toy(1, 2, 4);
        let mut bytes = encode(&set);
        bytes[12..16].copy_from_slice(&3u32.to_le_bytes());
        assert_eq!(
            decode(&bytes),
            Err(ParseError::TruncatedPayload {
                record: 2,
                declared: 3
            })
        );
    }

    #[test]
    fn non_finite_and_bad_label_are_distinct_errors() {
        let set = toy(1, 2, 4);
        let bytes = encode(&set);
        let first_record = HEADER_LEN + 2 * (2 + 2);

        let mut nan = bytes.clone();
        nan[first_record + 4..first_record + 8].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(decode(&nan), Err(ParseError::NonFiniteSample(0)));

        let mut label = bytes.clone();
        label[first_record..first_record + 2].copy_from_slice(&9u16.to_le_bytes());
        assert!(matches!(
            decode(&label),
            Err(ParseError::LabelOutOfRange { label: 9, .. })
        ));

        let mut version = bytes;
        version[4] = 2;
        assert_eq!(decode(&version), Err(ParseError::UnsupportedVersion(2)));
    }

    #[test]
    fn save_load_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.sigds");
        let mut set = toy(3, 2, 8);
        let mut recs = set.clone().into_records();
        recs[1].snr_db = None;
        recs[2].i[0] = -0.0;
        recs[2].q[3] = f32::MIN_POSITIVE / 4.0;
        set = set.with_records(recs).unwrap();
        save_sigds(&set, &path).unwrap();
        let back = load_sigds(&path).unwrap();
        assert_eq!(encode(&back), encode(&set));
        assert_eq!(back.records()[2].i[0].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_sigds("/nonexistent/dir/x.sigds").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(LabeledSignalSet::new(vec![], 4, vec![]).is_err());
        assert!(LabeledSignalSet::new(vec!["a".into(), "a".into()], 4, vec![]).is_err());
        assert!(LabeledSignalSet::new(vec!["".into()], 4, vec![]).is_err());
        assert!(LabeledSignalSet::new(vec!["a".into()], 4, vec![record(3, 0, 0.0)]).is_err());
        assert!(LabeledSignalSet::new(vec!["a".into()], 4, vec![record(4, 1, 0.0)]).is_err());
        let mut bad = record(4, 0, 0.0);
        bad.q[1] = f32::INFINITY;
        assert!(LabeledSignalSet::new(vec!["a".into()], 4, vec![bad]).is_err());
    }

    #[test]
    fn split_is_stratified_four_to_one() {
        let set = toy(100, 3, 4);
        let (train, test) = split_train_test(&set, 0.2, 5).unwrap();
        assert_eq!(train.class_counts(), vec![80; 3]);
        assert_eq!(test.class_counts(), vec![20; 3]);
        let again = split_train_test(&set, 0.2, 5).unwrap();
        assert_eq!(again.0, train);
        assert_eq!(again.1, test);
    }

    #[test]
    fn smallest_legal_split() {
        let set = toy(2, 2, 4);
        let (train, test) = split_train_test(&set, 0.5, 1).unwrap();
        assert_eq!(train.class_counts(), vec![1, 1]);
        assert_eq!(test.class_counts(), vec![1, 1]);
        // A tiny fraction still leaves one record on the test side.
        let (train, test) = split_train_test(&set, 0.01, 1).unwrap();
        assert_eq!((train.len(), test.len()), (2, 2));
        assert!(split_train_test(&toy(1, 2, 4), 0.5, 1).is_err());
        assert!(split_train_test(&set, 1.0, 1).is_err());
    }

    #[test]
    fn take_per_class_counts_and_errors() {
        let set = toy(20, 11, 4);
        let s = take_per_class(&set, 10, 3).unwrap();
        assert_eq!(s.len(), 110);
        assert_eq!(s.class_counts(), vec![10; 11]);
        assert!(take_per_class(&set, 21, 3).is_err());
        assert!(take_per_class(&set, 0, 3).is_err());
    }

    #[test]
    fn take_per_class_exhaustive_is_a_permutation() {
        let set = toy(7, 2, 4);
        let s = take_per_class(&set, 7, 9).unwrap();
        let mut got: Vec<u32> = s.records().iter().map(|r| r.i[0].to_bits()).collect();
        let mut want: Vec<u32> = set.records().iter().map(|r| r.i[0].to_bits()).collect();
        got.sort_unstable();
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn take_per_class_seeds_differ() {
        let set = toy(1000, 2, 2);
        let mut identical = 0;
        for pair in 0..20u64 {
            let a = take_per_class(&set, 10, 2 * pair).unwrap();
            let b = take_per_class(&set, 10, 2 * pair + 1).unwrap();
            if a == b {
                identical += 1;
            }
        }
        assert_eq!(identical, 0);
    }
}
