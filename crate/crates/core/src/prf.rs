//! Keyed pseudorandom function into the field and the key-derivation chains
//! built on it.
//!
//! Both schemes hang their entire randomness off a handful of 16-byte master
//! keys: bin keys come from a master key, blinding values from bin keys,
//! delegated polynomials from delegation keys. Everything here is a pure
//! function of the root key bytes, so a party (or an attacker holding a
//! captured key) re-derives bit-identical values.
//!
//! The PRF is HMAC-SHA-256. Key derivation hashes `0x01 || index || 0x00`
//! and keeps the first 16 output bytes; field expansion hashes
//! `0x02 || index || retry` and reduces the first 16 bytes mod p, retrying
//! with an incremented trailing byte when a nonzero value is required. The
//! distinct leading tags keep the two uses of one key uncorrelated. The
//! 128-bit-mod-p reduction bias (at most 2^-67 for the default modulus) is
//! accepted in exchange for determinism.
//!
//! None of these operations touch [`OpCounters`](crate::field::OpCounters):
//! the cost model prices modular arithmetic, interpolation and factorization
//! only, never PRF invocations.

use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::field::{Field, FieldElement, PartyId};

pub const KEY_LEN: usize = 16;

const TAG_DERIVE: u8 = 0x01;
const TAG_FIELD: u8 = 0x02;

/// Role a key plays in a session. Only the bytes enter the PRF; the label
/// travels along for reporting (key-material scans name what leaked).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyLabel {
    MasterA,
    MasterB,
    Tk,
    Tk1,
    Tk2,
    Bin,
    Derived,
}

impl KeyLabel {
    pub fn name(&self) -> &'static str {
        match self {
            KeyLabel::MasterA => "mk_A",
            KeyLabel::MasterB => "mk_B",
            KeyLabel::Tk => "tk",
            KeyLabel::Tk1 => "tk1",
            KeyLabel::Tk2 => "tk2",
            KeyLabel::Bin => "bin",
            KeyLabel::Derived => "derived",
        }
    }
}

/// A 16-byte secret key.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Key {
    bytes: [u8; KEY_LEN],
    label: KeyLabel,
}

impl std::fmt::Debug for Key {
    // Keys stay out of debug output; only the role is shown.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Key({})", self.label.name())
    }
}

impl Key {
    pub fn new(bytes: [u8; KEY_LEN], label: KeyLabel) -> Key {
        Key { bytes, label }
    }

    pub fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    pub fn label(&self) -> KeyLabel {
        self.label
    }

    pub fn with_label(self, label: KeyLabel) -> Key {
        Key { label, ..self }
    }

    pub fn hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn hmac_sha256(key: &Key, msg: &[u8]) -> [u8; 32] {
    let mut mac = Hmac::<Sha256>::new_from_slice(&key.bytes).expect("HMAC accepts any key length");
    mac.update(msg);
    mac.finalize().into_bytes().into()
}

fn prf_message(tag: u8, index: u64, retry: u8) -> [u8; 10] {
    let mut msg = [0u8; 10];
    msg[0] = tag;
    msg[1..9].copy_from_slice(&index.to_be_bytes());
    msg[9] = retry;
    msg
}

/// Deterministic 16-byte subkey of `parent` at `index`.
pub fn derive_key(parent: &Key, index: u64) -> Key {
    let digest = hmac_sha256(parent, &prf_message(TAG_DERIVE, index, 0));
    let mut bytes = [0u8; KEY_LEN];
    bytes.copy_from_slice(&digest[..KEY_LEN]);
    Key::new(bytes, KeyLabel::Derived)
}

fn prf_field_retry(key: &Key, index: u64, retry: u8, field: Field) -> FieldElement {
    let digest = hmac_sha256(key, &prf_message(TAG_FIELD, index, retry));
    let mut wide = [0u8; 16];
    wide.copy_from_slice(&digest[..16]);
    field.elem((u128::from_be_bytes(wide) % field.modulus() as u128) as u64)
}

/// Deterministic field element keyed by `(key, index)`.
pub fn prf_field(key: &Key, index: u64, field: Field) -> FieldElement {
    prf_field_retry(key, index, 0, field)
}

/// As [`prf_field`] but never zero: a zero draw re-derives with the retry
/// byte bumped, so every holder of the key lands on the same nonzero value.
pub fn prf_field_nonzero(key: &Key, index: u64, field: Field) -> FieldElement {
    for retry in 0u8..=255 {
        let v = prf_field_retry(key, index, retry, field);
        if !v.is_zero() {
            return v;
        }
    }
    unreachable!("256 consecutive zero PRF outputs");
}

/// An h-by-n grid of blinding values `z[j][i]`, one per bin slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindingMatrix {
    owner: PartyId,
    rows: Vec<Vec<FieldElement>>,
}

impl BlindingMatrix {
    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn rows(&self) -> &[Vec<FieldElement>] {
        &self.rows
    }

    /// Entry for bin `j` and point `i`, both zero-based.
    pub fn at(&self, j: usize, i: usize) -> FieldElement {
        self.rows[j][i]
    }
}

/// Expands a master key into the full blinding grid: bin key `k_j` derives
/// from `mk` at index `j`, and `z[j][i]` is the PRF of `k_j` at `i`
/// (one-based indices on both axes, matching the protocol description).
/// With `nonzero` set every entry is invertible, as multiplicative blinding
/// requires.
pub fn expand_blinding(
    owner: PartyId,
    mk: &Key,
    h: usize,
    n: usize,
    nonzero: bool,
    field: Field,
) -> BlindingMatrix {
    assert!(h >= 1 && n >= 1);
    let rows = (1..=h as u64)
        .map(|j| {
            let bin_key = derive_key(mk, j).with_label(KeyLabel::Bin);
            (1..=n as u64)
                .map(|i| {
                    if nonzero {
                        prf_field_nonzero(&bin_key, i, field)
                    } else {
                        prf_field(&bin_key, i, field)
                    }
                })
                .collect()
        })
        .collect();
    BlindingMatrix { owner, rows }
}
