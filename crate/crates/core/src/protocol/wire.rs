//! Binary wire format and file layouts.
//!
//! Messages open with the magic `EPSI` and a version byte, then sender,
//! recipient, a payload-type byte, and the payload. All lengths are
//! big-endian. Field elements are 8-byte big-endian words for the default
//! modulus; for any other prime they carry an explicit length byte followed
//! by the minimal big-endian representation. Keys are 16 raw bytes and
//! appear only in baseline messages.
//!
//! Transcript files are self-contained: magic `EPTR`, scheme, the full
//! public-parameter block (magic `EPRM`), then length-prefixed messages.
//! The cloud's on-disk store is one file per party holding exactly the
//! matrix encoding.

use thiserror::Error;

use crate::bins::{EncodingParams, HashTableParams};
use crate::field::{Field, FieldElement, PartyId, MERSENNE61};
use crate::prf::{Key, KeyLabel, KEY_LEN};

use super::message::{Message, Payload, Transcript, TranscriptEntry};
use super::{BlindedMatrix, MatrixKind, PublicParams, Scheme};

pub const MESSAGE_MAGIC: &[u8; 4] = b"EPSI";
pub const PARAMS_MAGIC: &[u8; 4] = b"EPRM";
pub const TRANSCRIPT_MAGIC: &[u8; 4] = b"EPTR";
pub const WIRE_VERSION: u8 = 0x01;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("input truncated while reading {0}")]
    Truncated(&'static str),
    #[error("bad magic, expected {0}")]
    BadMagic(&'static str),
    #[error("unsupported wire version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown {what} tag {tag:#04x}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("malformed field element: {0}")]
    BadFieldElement(String),
    #[error("trailing bytes after a complete value")]
    TrailingBytes,
    #[error("malformed value: {0}")]
    Malformed(String),
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.buf.len() {
            return Err(WireError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(WireError::TrailingBytes)
        }
    }
}

pub fn encode_field_element(e: FieldElement, out: &mut Vec<u8>) {
    if e.field().modulus() == MERSENNE61 {
        out.extend_from_slice(&e.value().to_be_bytes());
    } else {
        let bytes = e.value().to_be_bytes();
        let skip = e.value().leading_zeros() as usize / 8;
        let minimal = &bytes[skip.min(8)..];
        out.push(minimal.len() as u8);
        out.extend_from_slice(minimal);
    }
}

pub(crate) fn decode_field_element(
    r: &mut Reader,
    field: Field,
) -> Result<FieldElement, WireError> {
    let value = if field.modulus() == MERSENNE61 {
        u64::from_be_bytes(r.take(8, "field element")?.try_into().unwrap())
    } else {
        let len = r.u8("field element length")? as usize;
        if len > 8 {
            return Err(WireError::BadFieldElement(format!(
                "length {len} exceeds 8 bytes"
            )));
        }
        let raw = r.take(len, "field element bytes")?;
        if !raw.is_empty() && raw[0] == 0 {
            return Err(WireError::BadFieldElement("non-minimal encoding".into()));
        }
        raw.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64)
    };
    if value >= field.modulus() {
        return Err(WireError::BadFieldElement(format!(
            "{value} is not a canonical residue mod {}",
            field.modulus()
        )));
    }
    Ok(field.elem(value))
}

fn encode_key(k: &Key, out: &mut Vec<u8>) {
    out.extend_from_slice(k.bytes());
}

fn decode_key(r: &mut Reader, label: KeyLabel) -> Result<Key, WireError> {
    let raw: [u8; KEY_LEN] = r.take(KEY_LEN, "key")?.try_into().unwrap();
    Ok(Key::new(raw, label))
}

fn party_byte(p: PartyId) -> u8 {
    p.short() as u8
}

fn decode_party(b: u8) -> Result<PartyId, WireError> {
    PartyId::from_short(b as char).ok_or(WireError::UnknownTag {
        what: "party",
        tag: b,
    })
}

fn kind_byte(k: MatrixKind) -> u8 {
    match k {
        MatrixKind::OAdditive => 0x01,
        MatrixKind::OMultiplicative => 0x02,
        MatrixKind::Q => 0x03,
        MatrixKind::QPrime => 0x04,
        MatrixKind::QDoublePrime => 0x05,
        MatrixKind::T => 0x06,
    }
}

fn decode_kind(b: u8) -> Result<MatrixKind, WireError> {
    Ok(match b {
        0x01 => MatrixKind::OAdditive,
        0x02 => MatrixKind::OMultiplicative,
        0x03 => MatrixKind::Q,
        0x04 => MatrixKind::QPrime,
        0x05 => MatrixKind::QDoublePrime,
        0x06 => MatrixKind::T,
        tag => {
            return Err(WireError::UnknownTag {
                what: "matrix kind",
                tag,
            })
        }
    })
}

pub fn encode_matrix(m: &BlindedMatrix, out: &mut Vec<u8>) {
    out.push(kind_byte(m.kind()));
    out.extend_from_slice(&(m.h() as u32).to_be_bytes());
    out.extend_from_slice(&(m.n() as u32).to_be_bytes());
    for row in m.rows() {
        for &e in row {
            encode_field_element(e, out);
        }
    }
}

pub(crate) fn decode_matrix(r: &mut Reader, field: Field) -> Result<BlindedMatrix, WireError> {
    let kind = decode_kind(r.u8("matrix kind")?)?;
    let h = r.u32("matrix height")? as usize;
    let n = r.u32("matrix width")? as usize;
    if h == 0 || n == 0 || h > 1 << 24 || n > 1 << 24 {
        return Err(WireError::Malformed(format!("matrix dimensions {h}x{n}")));
    }
    let mut rows = Vec::with_capacity(h);
    for _ in 0..h {
        let mut row = Vec::with_capacity(n);
        for _ in 0..n {
            row.push(decode_field_element(r, field)?);
        }
        rows.push(row);
    }
    Ok(BlindedMatrix::new(kind, rows))
}

fn payload_type_byte(p: &Payload) -> u8 {
    match p {
        Payload::Outsource { .. } => 0x01,
        Payload::StartRequest { .. } => 0x02,
        Payload::StartRequestWithKey { .. } => 0x03,
        Payload::DelegationToCloud { .. } => 0x04,
        Payload::DelegationKeyToCloud { .. } => 0x05,
        Payload::QToB { .. } => 0x06,
        Payload::CloudResultImproved { .. } => 0x07,
        Payload::CloudResultEo { .. } => 0x08,
    }
}

pub fn encode_message(msg: &Message, _params: &PublicParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MESSAGE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(party_byte(msg.from));
    out.push(party_byte(msg.to));
    out.push(payload_type_byte(&msg.payload));
    match &msg.payload {
        Payload::Outsource { party, o } => {
            out.push(party_byte(*party));
            encode_matrix(o, &mut out);
        }
        Payload::StartRequest { b } => out.push(party_byte(*b)),
        Payload::StartRequestWithKey { b, mk_b } => {
            out.push(party_byte(*b));
            encode_key(mk_b, &mut out);
        }
        Payload::DelegationToCloud { a, b, q } => {
            out.push(party_byte(*a));
            out.push(party_byte(*b));
            encode_matrix(q, &mut out);
        }
        Payload::DelegationKeyToCloud { a, b, tk } => {
            out.push(party_byte(*a));
            out.push(party_byte(*b));
            encode_key(tk, &mut out);
        }
        Payload::QToB { q } => encode_matrix(q, &mut out),
        Payload::CloudResultImproved { q_prime, q_dprime } => {
            encode_matrix(q_prime, &mut out);
            encode_matrix(q_dprime, &mut out);
        }
        Payload::CloudResultEo { t } => encode_matrix(t, &mut out),
    }
    out
}

pub fn decode_message(bytes: &[u8], params: &PublicParams) -> Result<Message, WireError> {
    let mut r = Reader::new(bytes);
    let msg = decode_message_from(&mut r, params)?;
    r.finish()?;
    Ok(msg)
}

fn decode_message_from(r: &mut Reader, params: &PublicParams) -> Result<Message, WireError> {
    if r.take(4, "message magic")? != MESSAGE_MAGIC {
        return Err(WireError::BadMagic("EPSI"));
    }
    let version = r.u8("message version")?;
    if version != WIRE_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let from = decode_party(r.u8("sender")?)?;
    let to = decode_party(r.u8("recipient")?)?;
    let field = params.field;
    let payload = match r.u8("payload type")? {
        0x01 => Payload::Outsource {
            party: decode_party(r.u8("owner")?)?,
            o: decode_matrix(r, field)?,
        },
        0x02 => Payload::StartRequest {
            b: decode_party(r.u8("b id")?)?,
        },
        0x03 => Payload::StartRequestWithKey {
            b: decode_party(r.u8("b id")?)?,
            mk_b: decode_key(r, KeyLabel::MasterB)?,
        },
        0x04 => Payload::DelegationToCloud {
            a: decode_party(r.u8("a id")?)?,
            b: decode_party(r.u8("b id")?)?,
            q: decode_matrix(r, field)?,
        },
        0x05 => Payload::DelegationKeyToCloud {
            a: decode_party(r.u8("a id")?)?,
            b: decode_party(r.u8("b id")?)?,
            tk: decode_key(r, KeyLabel::Tk)?,
        },
        0x06 => Payload::QToB {
            q: decode_matrix(r, field)?,
        },
        0x07 => Payload::CloudResultImproved {
            q_prime: decode_matrix(r, field)?,
            q_dprime: decode_matrix(r, field)?,
        },
        0x08 => Payload::CloudResultEo {
            t: decode_matrix(r, field)?,
        },
        tag => {
            return Err(WireError::UnknownTag {
                what: "payload",
                tag,
            })
        }
    };
    Ok(Message { from, to, payload })
}

fn encode_string(s: &str, out: &mut Vec<u8>) {
    debug_assert!(s.len() <= u8::MAX as usize);
    out.push(s.len() as u8);
    out.extend_from_slice(s.as_bytes());
}

fn decode_string(r: &mut Reader) -> Result<String, WireError> {
    let len = r.u8("string length")? as usize;
    let raw = r.take(len, "string bytes")?;
    String::from_utf8(raw.to_vec()).map_err(|e| WireError::Malformed(e.to_string()))
}

pub fn encode_params(params: &PublicParams, out: &mut Vec<u8>) {
    out.extend_from_slice(PARAMS_MAGIC);
    out.push(WIRE_VERSION);
    out.extend_from_slice(&params.field.modulus().to_be_bytes());
    out.extend_from_slice(&(params.cardinality as u64).to_be_bytes());
    out.extend_from_slice(&(params.table.bins() as u32).to_be_bytes());
    out.extend_from_slice(&(params.table.capacity() as u32).to_be_bytes());
    out.push(params.enc.element_bits as u8);
    out.push(params.enc.tag_bits as u8);
    out.extend_from_slice(&params.enc.tag.to_be_bytes());
    encode_string(&params.hash_spec, out);
    encode_string(&params.prf_spec, out);
    for &x in &params.xs {
        encode_field_element(x, out);
    }
}

pub(crate) fn decode_params_from(r: &mut Reader) -> Result<PublicParams, WireError> {
    if r.take(4, "params magic")? != PARAMS_MAGIC {
        return Err(WireError::BadMagic("EPRM"));
    }
    let version = r.u8("params version")?;
    if version != WIRE_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let p = r.u64("modulus")?;
    let field = Field::new(p).map_err(|e| WireError::Malformed(e.to_string()))?;
    let cardinality = r.u64("cardinality")? as usize;
    let h = r.u32("bin count")? as usize;
    let d = r.u32("bin capacity")? as usize;
    if h == 0 || d == 0 || h > 1 << 24 || d > 1 << 24 {
        return Err(WireError::Malformed(format!("table shape h={h} d={d}")));
    }
    let enc = EncodingParams {
        element_bits: r.u8("element bits")? as u32,
        tag_bits: r.u8("tag bits")? as u32,
        tag: r.u64("tag")?,
    };
    let hash_spec = decode_string(r)?;
    let prf_spec = decode_string(r)?;
    let table = HashTableParams::new(h, d);
    let mut xs = Vec::with_capacity(table.points());
    for _ in 0..table.points() {
        xs.push(decode_field_element(r, field)?);
    }
    Ok(PublicParams {
        field,
        cardinality,
        table,
        enc,
        xs,
        hash_spec,
        prf_spec,
    })
}

pub fn decode_params(bytes: &[u8]) -> Result<PublicParams, WireError> {
    let mut r = Reader::new(bytes);
    let params = decode_params_from(&mut r)?;
    r.finish()?;
    Ok(params)
}

fn scheme_byte(s: Scheme) -> u8 {
    match s {
        Scheme::Eo => 0x01,
        Scheme::Improved => 0x02,
    }
}

fn decode_scheme(b: u8) -> Result<Scheme, WireError> {
    match b {
        0x01 => Ok(Scheme::Eo),
        0x02 => Ok(Scheme::Improved),
        tag => Err(WireError::UnknownTag {
            what: "scheme",
            tag,
        }),
    }
}

pub fn encode_transcript(t: &Transcript) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TRANSCRIPT_MAGIC);
    out.push(WIRE_VERSION);
    out.push(scheme_byte(t.scheme()));
    encode_params(t.params(), &mut out);
    out.extend_from_slice(&(t.len() as u32).to_be_bytes());
    for entry in t.entries() {
        out.extend_from_slice(&(entry.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&entry.bytes);
    }
    out
}

pub fn decode_transcript(bytes: &[u8]) -> Result<Transcript, WireError> {
    let mut r = Reader::new(bytes);
    if r.take(4, "transcript magic")? != TRANSCRIPT_MAGIC {
        return Err(WireError::BadMagic("EPTR"));
    }
    let version = r.u8("transcript version")?;
    if version != WIRE_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let scheme = decode_scheme(r.u8("scheme")?)?;
    let params = decode_params_from(&mut r)?;
    let count = r.u32("message count")?;
    let mut transcript = Transcript::new(scheme, params.clone());
    for seq in 0..count {
        let len = r.u32("message length")? as usize;
        let raw = r.take(len, "message body")?.to_vec();
        let message = decode_message(&raw, &params)?;
        transcript.push_entry(TranscriptEntry {
            seq,
            message,
            bytes: raw,
        });
    }
    r.finish()?;
    Ok(transcript)
}

/// Length-prefixed coefficient array, constant term first.
pub fn encode_poly(f: &crate::poly::Polynomial, out: &mut Vec<u8>) {
    out.extend_from_slice(&(f.coeffs().len() as u32).to_be_bytes());
    for &c in f.coeffs() {
        encode_field_element(c, out);
    }
}

pub fn decode_poly(bytes: &[u8], field: Field) -> Result<crate::poly::Polynomial, WireError> {
    let mut r = Reader::new(bytes);
    let len = r.u32("coefficient count")? as usize;
    if len > 1 << 24 {
        return Err(WireError::Malformed(format!("{len} coefficients")));
    }
    let mut coeffs = Vec::with_capacity(len);
    for _ in 0..len {
        coeffs.push(decode_field_element(&mut r, field)?);
    }
    r.finish()?;
    if coeffs.last().is_some_and(|c| c.is_zero()) {
        return Err(WireError::Malformed("trailing zero coefficient".into()));
    }
    Ok(crate::poly::Polynomial::from_coeffs(field, coeffs))
}

pub fn encode_matrix_file(m: &BlindedMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    encode_matrix(m, &mut out);
    out
}

pub fn decode_matrix_file(bytes: &[u8], field: Field) -> Result<BlindedMatrix, WireError> {
    let mut r = Reader::new(bytes);
    let m = decode_matrix(&mut r, field)?;
    r.finish()?;
    Ok(m)
}
