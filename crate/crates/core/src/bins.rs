//! Element encoding, the balls-into-bins table, and evaluation-point
//! sampling.
//!
//! Set elements live in a `[0, 2^u)` universe and are embedded into the
//! field as `s * 2^t + tag` for a fixed public t-bit tag. A field element is
//! a *valid* encoding when it is below `2^(u+t)` and its low t bits equal
//! the tag, so real elements can be told apart from the random roots a
//! blinded product drags in, with no dictionary required. A random field
//! element passes by accident with probability `2^u / p` (about 2^-29 at
//! the defaults).
//!
//! Each party hashes its encoded elements into h bins of capacity d and
//! tops every bin up to exactly d entries with random *invalid* padding.
//! Padding and the public evaluation points are both sampled away from
//! valid encodings, and padding additionally away from the evaluation
//! points, so a bin polynomial never vanishes at an evaluation point;
//! multiplicative blinding would otherwise hand an observer `tau(x_i) = 0`
//! for free.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{Field, FieldElement};
use crate::prf::{derive_key, prf_field, Key, KeyLabel};

/// Default overflow budget for [`suggest_bin_count`].
pub const DEFAULT_FAIL_PROB: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BinsError {
    #[error("element {value} outside the {bits}-bit universe")]
    ElementOutOfRange { value: u64, bits: u32 },
    #[error("duplicate element {0} in input set")]
    DuplicateElement(u64),
    #[error("bin {bin} overflows its capacity of {capacity}")]
    BinOverflow { bin: usize, capacity: usize },
    #[error(
        "encoding needs u + t < bit_length(p) - 1, got u={u} t={t} for a {field_bits}-bit field"
    )]
    EncodingTooWide { u: u32, t: u32, field_bits: u32 },
    #[error("set file line {line}: {reason}")]
    SetFile { line: usize, reason: String },
}

/// Shift-and-tag element encoding: `encode(s) = s * 2^t + tag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingParams {
    /// Universe bit width u; elements live in [0, 2^u).
    pub element_bits: u32,
    /// Tag bit width t.
    pub tag_bits: u32,
    /// The fixed public t-bit pattern.
    pub tag: u64,
}

impl Default for EncodingParams {
    fn default() -> Self {
        EncodingParams {
            element_bits: 32,
            tag_bits: 16,
            tag: 0xA55A,
        }
    }
}

impl EncodingParams {
    /// The encoded space must embed in the field with headroom.
    pub fn validate(&self, field: Field) -> Result<(), BinsError> {
        let ok = self.element_bits >= 1
            && self.tag_bits >= 1
            && self.tag < (1u64 << self.tag_bits)
            && self.element_bits + self.tag_bits < field.bit_length() - 1;
        if ok {
            Ok(())
        } else {
            Err(BinsError::EncodingTooWide {
                u: self.element_bits,
                t: self.tag_bits,
                field_bits: field.bit_length(),
            })
        }
    }

    pub fn universe_size(&self) -> u64 {
        debug_assert!(self.element_bits < 64);
        1u64 << self.element_bits
    }

    pub fn encode(&self, field: Field, s: u64) -> Result<FieldElement, BinsError> {
        if s >= self.universe_size() {
            return Err(BinsError::ElementOutOfRange {
                value: s,
                bits: self.element_bits,
            });
        }
        Ok(field.elem((s << self.tag_bits) | self.tag))
    }

    /// Recovers the element from a valid encoding, or `None` when the root
    /// is padding or blinding noise.
    pub fn decode(&self, e: FieldElement) -> Option<u64> {
        debug_assert!(self.element_bits + self.tag_bits < 64);
        let v = e.value();
        if v < (1u64 << (self.element_bits + self.tag_bits))
            && v & ((1u64 << self.tag_bits) - 1) == self.tag
        {
            Some(v >> self.tag_bits)
        } else {
            None
        }
    }

    pub fn is_valid(&self, e: FieldElement) -> bool {
        self.decode(e).is_some()
    }
}

/// Hash table shape: h bins of capacity d, evaluated at n = 2d + 1 points.
/// A product of two degree-d bin polynomials has degree 2d, so n points pin
/// it down exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashTableParams {
    bins: usize,
    capacity: usize,
}

impl HashTableParams {
    pub fn new(bins: usize, capacity: usize) -> HashTableParams {
        assert!(bins >= 1 && capacity >= 1);
        HashTableParams { bins, capacity }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Evaluation count n = 2d + 1.
    pub fn points(&self) -> usize {
        2 * self.capacity + 1
    }
}

/// Bin index in [1, h]: SHA-256 over the 8-byte big-endian encoded element,
/// digest taken as a big-endian integer mod h, plus one. Unkeyed and public,
/// so every party maps equal elements to equal bins.
pub fn assign_bin(e: FieldElement, bins: usize) -> usize {
    let digest = Sha256::digest(e.value().to_be_bytes());
    let mut r: u64 = 0;
    for &byte in digest.iter() {
        r = (r * 256 + byte as u64) % bins as u64;
    }
    r as usize + 1
}

/// A party's padded hash table. Every bin holds exactly d entries; the
/// owner-side mask records which are real.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinTable {
    bins: Vec<Vec<FieldElement>>,
    real_mask: Vec<Vec<bool>>,
}

impl BinTable {
    /// Entries of bin `j`, one-based.
    pub fn bin(&self, j: usize) -> &[FieldElement] {
        &self.bins[j - 1]
    }

    pub fn real_mask(&self, j: usize) -> &[bool] {
        &self.real_mask[j - 1]
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }
}

/// Encodes and hashes a set into its padded bin table.
///
/// Padding entries are drawn from a PRF chain on `pad_seed` (one subkey per
/// bin) and resampled until they are invalid under the encoding and
/// distinct from every evaluation point, so they can never decode as
/// results and never zero a bin polynomial at an evaluation point.
pub fn build_table(
    set: &[u64],
    table: &HashTableParams,
    enc: &EncodingParams,
    field: Field,
    pad_seed: &Key,
    xs: &[FieldElement],
) -> Result<BinTable, BinsError> {
    let mut seen = BTreeSet::new();
    for &s in set {
        if !seen.insert(s) {
            return Err(BinsError::DuplicateElement(s));
        }
    }
    let d = table.capacity();
    let mut bins = vec![Vec::with_capacity(d); table.bins()];
    let mut real_mask = vec![Vec::with_capacity(d); table.bins()];
    for &s in set {
        let e = enc.encode(field, s)?;
        let j = assign_bin(e, table.bins());
        if bins[j - 1].len() == d {
            return Err(BinsError::BinOverflow {
                bin: j,
                capacity: d,
            });
        }
        bins[j - 1].push(e);
        real_mask[j - 1].push(true);
    }
    for j in 0..table.bins() {
        let bin_key = derive_key(pad_seed, j as u64 + 1).with_label(KeyLabel::Bin);
        let mut draw = 0u64;
        while bins[j].len() < d {
            let r = prf_field(&bin_key, draw, field);
            draw += 1;
            if enc.is_valid(r) || xs.contains(&r) {
                continue;
            }
            bins[j].push(r);
            real_mask[j].push(false);
        }
    }
    Ok(BinTable { bins, real_mask })
}

/// Smallest h such that `h * P[Binomial(c, 1/h) > d] <= fail_prob`, i.e. a
/// union bound keeps the chance of any bin overflowing below the budget.
/// The tail is the exact binomial sum; h is searched upward from 1.
pub fn suggest_bin_count(c: usize, d: usize, fail_prob: f64) -> usize {
    assert!(c >= 1 && d >= 1);
    assert!(fail_prob > 0.0 && fail_prob < 1.0);
    if c <= d {
        return 1;
    }
    let mut h = 1usize;
    loop {
        if h as f64 * binomial_tail_gt(c, 1.0 / h as f64, d) <= fail_prob {
            return h;
        }
        h += 1;
    }
}

/// P[Binomial(c, q) > d], summed exactly in log space.
pub fn binomial_tail_gt(c: usize, q: f64, d: usize) -> f64 {
    if d >= c {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    // ln of term k, advanced by the term ratio; stays finite for 0 < q < 1.
    let ln_q = q.ln();
    let ln_1q = (1.0 - q).ln();
    let mut ln_term = c as f64 * ln_1q; // k = 0
    let mut tail = 0.0;
    for k in 0..c {
        ln_term += ((c - k) as f64).ln() - (k as f64 + 1.0).ln() + ln_q - ln_1q;
        if k + 1 > d {
            tail += ln_term.exp();
        }
    }
    tail
}

/// n distinct public evaluation points, none a valid encoding, drawn
/// deterministically from the seed.
pub fn sample_eval_points(
    n: usize,
    seed: &Key,
    enc: &EncodingParams,
    field: Field,
) -> Vec<FieldElement> {
    assert!(n >= 1);
    let mut out: Vec<FieldElement> = Vec::with_capacity(n);
    let mut draw = 0u64;
    while out.len() < n {
        let cand = prf_field(seed, draw, field);
        draw += 1;
        if enc.is_valid(cand) || out.contains(&cand) {
            continue;
        }
        out.push(cand);
    }
    out
}

/// Parses the set file format: UTF-8 text, one decimal element per line,
/// `#` starts a comment, blank lines ignored.
pub fn parse_set_text(text: &str) -> Result<Vec<u64>, BinsError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let value = line.parse::<u64>().map_err(|e| BinsError::SetFile {
            line: idx + 1,
            reason: format!("{e}: {line:?}"),
        })?;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::OpCounters;
    use crate::poly::Polynomial;

    fn field() -> Field {
        Field::default_protocol()
    }

    fn key(fill: u8) -> Key {
        Key::new([fill; 16], KeyLabel::Derived)
    }

    #[test]
    fn encode_decode_examples() {
        let enc = EncodingParams::default();
        let f = field();
        // 5 * 65536 + 0xA55A
        assert_eq!(enc.encode(f, 5).unwrap(), f.elem(370010));
        assert_eq!(enc.decode(f.elem(370010)), Some(5));
        assert_eq!(enc.decode(f.elem(370011)), None); // tag mismatch
        assert_eq!(enc.decode(f.elem(1u64 << 50)), None); // beyond encoded range
        assert_eq!(
            enc.encode(f, 1u64 << 32),
            Err(BinsError::ElementOutOfRange {
                value: 1u64 << 32,
                bits: 32
            })
        );
        for s in [0u64, 1, 12345, (1u64 << 32) - 1] {
            assert_eq!(enc.decode(enc.encode(f, s).unwrap()), Some(s));
        }
    }

    #[test]
    fn encoding_width_validation() {
        let enc = EncodingParams::default();
        assert!(enc.validate(field()).is_ok());
        assert!(enc.validate(Field::new(13).unwrap()).is_err());
        let wide = EncodingParams {
            element_bits: 44,
            tag_bits: 16,
            tag: 0xA55A,
        };
        assert!(wide.validate(field()).is_err()); // 60 >= 61 - 1
    }

    #[test]
    fn assign_bin_range_and_determinism() {
        let enc = EncodingParams::default();
        let f = field();
        for s in 0..200u64 {
            let e = enc.encode(f, s).unwrap();
            let j = assign_bin(e, 16);
            assert!((1..=16).contains(&j));
            assert_eq!(j, assign_bin(e, 16)); // both clients agree
        }
        assert_eq!(assign_bin(f.elem(99), 1), 1);
    }

    #[test]
    fn assign_bin_balance() {
        let enc = EncodingParams::default();
        let f = field();
        let h = 16;
        let mut counts = vec![0usize; h];
        for s in 0..10_000u64 {
            let e = enc.encode(f, s * 7 + 1).unwrap();
            counts[assign_bin(e, h) - 1] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - 625.0).abs() / 625.0;
            assert!(dev <= 0.20, "bin {} holds {c} of 10000", j + 1);
        }
    }

    /// Greedily picks `want` elements whose bins stay within capacity, so
    /// small fixed-shape tables can be exercised without overflow.
    pub(crate) fn fitting_set(
        want: usize,
        table: &HashTableParams,
        enc: &EncodingParams,
        f: Field,
        start: u64,
    ) -> Vec<u64> {
        let mut loads = vec![0usize; table.bins()];
        let mut out = Vec::with_capacity(want);
        let mut s = start;
        while out.len() < want {
            let e = enc.encode(f, s).unwrap();
            let j = assign_bin(e, table.bins());
            if loads[j - 1] < table.capacity() {
                loads[j - 1] += 1;
                out.push(s);
            }
            s += 1;
        }
        out
    }

    #[test]
    fn build_table_pads_to_capacity() {
        let enc = EncodingParams::default();
        let f = field();
        let table = HashTableParams::new(4, 3);
        let xs = sample_eval_points(table.points(), &key(1), &enc, f);
        let set = fitting_set(5, &table, &enc, f, 10);
        let t = build_table(&set, &table, &enc, f, &key(2), &xs).unwrap();
        let mut real_total = 0;
        for j in 1..=4 {
            assert_eq!(t.bin(j).len(), 3);
            for (slot, (&e, &real)) in t.bin(j).iter().zip(t.real_mask(j)).enumerate() {
                if real {
                    real_total += 1;
                    assert!(enc.decode(e).is_some(), "bin {j} slot {slot}");
                } else {
                    assert!(enc.decode(e).is_none(), "bin {j} slot {slot}");
                    assert!(!xs.contains(&e));
                }
            }
        }
        assert_eq!(real_total, set.len());
        // Deterministic in the padding seed.
        assert_eq!(t, build_table(&set, &table, &enc, f, &key(2), &xs).unwrap());
        assert_ne!(t, build_table(&set, &table, &enc, f, &key(3), &xs).unwrap());
    }

    #[test]
    fn build_table_empty_set_is_all_padding() {
        let enc = EncodingParams::default();
        let f = field();
        let table = HashTableParams::new(2, 3);
        let xs = sample_eval_points(table.points(), &key(1), &enc, f);
        let t = build_table(&[], &table, &enc, f, &key(2), &xs).unwrap();
        for j in 1..=2 {
            assert_eq!(t.bin(j).len(), 3);
            assert!(t.real_mask(j).iter().all(|&r| !r));
        }
    }

    #[test]
    fn build_table_overflow_and_duplicates() {
        let enc = EncodingParams::default();
        let f = field();
        let table = HashTableParams::new(1, 3);
        let xs = sample_eval_points(table.points(), &key(1), &enc, f);
        let err = build_table(&[1, 2, 3, 4, 5], &table, &enc, f, &key(2), &xs).unwrap_err();
        assert_eq!(
            err,
            BinsError::BinOverflow {
                bin: 1,
                capacity: 3
            }
        );
        let err = build_table(&[7, 7], &table, &enc, f, &key(2), &xs).unwrap_err();
        assert_eq!(err, BinsError::DuplicateElement(7));
    }

    #[test]
    fn bin_polynomials_never_vanish_on_eval_points() {
        let enc = EncodingParams::default();
        let f = field();
        let table = HashTableParams::new(3, 4);
        let mut ctr = OpCounters::scratch();
        for trial in 0..20u8 {
            let xs = sample_eval_points(table.points(), &key(trial), &enc, f);
            let set = fitting_set(8, &table, &enc, f, trial as u64 * 1000);
            let t = build_table(&set, &table, &enc, f, &key(100 + trial), &xs).unwrap();
            for j in 1..=3 {
                let tau = Polynomial::from_roots(f, t.bin(j), &mut ctr);
                for &x in &xs {
                    assert!(!tau.eval(x, &mut ctr).is_zero());
                }
            }
        }
    }

    #[test]
    fn suggest_bin_count_examples() {
        assert_eq!(suggest_bin_count(10, 10, DEFAULT_FAIL_PROB), 1);
        assert_eq!(suggest_bin_count(3, 7, DEFAULT_FAIL_PROB), 1);
        // The returned h satisfies the bound and h - 1 does not.
        for (c, d) in [(50usize, 10usize), (64, 10), (40, 5), (100, 20)] {
            let h = suggest_bin_count(c, d, DEFAULT_FAIL_PROB);
            assert!(h as f64 * binomial_tail_gt(c, 1.0 / h as f64, d) <= DEFAULT_FAIL_PROB);
            if h > 1 {
                let g = h - 1;
                assert!(g as f64 * binomial_tail_gt(c, 1.0 / g as f64, d) > DEFAULT_FAIL_PROB);
            }
        }
    }

    #[test]
    fn suggest_bin_count_scales_near_linearly() {
        let mut prev = suggest_bin_count(64, 10, DEFAULT_FAIL_PROB);
        for c in [128usize, 256, 512] {
            let h = suggest_bin_count(c, 10, DEFAULT_FAIL_PROB);
            let ratio = h as f64 / prev as f64;
            assert!(
                (1.6..=2.6).contains(&ratio),
                "c={c}: h went {prev} -> {h} (ratio {ratio:.2})"
            );
            prev = h;
        }
    }

    #[test]
    fn binomial_tail_against_direct_sum() {
        // Small enough to sum naively with exact binomial coefficients.
        let c = 12;
        let q: f64 = 0.3;
        for d in 0..12usize {
            let mut direct = 0.0;
            for k in (d + 1)..=c {
                let mut choose = 1.0f64;
                for i in 0..k {
                    choose *= (c - i) as f64 / (i + 1) as f64;
                }
                direct += choose * q.powi(k as i32) * (1.0 - q).powi((c - k) as i32);
            }
            let got = binomial_tail_gt(c, q, d);
            assert!((got - direct).abs() <= 1e-12, "d={d}: {got} vs {direct}");
        }
    }

    #[test]
    fn eval_points_distinct_invalid_deterministic() {
        let enc = EncodingParams::default();
        let f = field();
        let xs = sample_eval_points(21, &key(7), &enc, f);
        assert_eq!(xs.len(), 21);
        let distinct: BTreeSet<u64> = xs.iter().map(|x| x.value()).collect();
        assert_eq!(distinct.len(), 21);
        assert!(xs.iter().all(|&x| !enc.is_valid(x)));
        assert_eq!(xs, sample_eval_points(21, &key(7), &enc, f));
    }

    #[test]
    fn set_file_parsing() {
        let text = "# header\n1\n2 # trailing comment\n\n  3  \n";
        assert_eq!(parse_set_text(text).unwrap(), vec![1, 2, 3]);
        let err = parse_set_text("1\nnope\n").unwrap_err();
        assert!(matches!(err, BinsError::SetFile { line: 2, .. }));
    }
}
