//! Typed protocol messages and the append-only transcript.
//!
//! The transcript stores each message together with its wire bytes in send
//! order; the bytes are what an eavesdropper works from. Recording
//! re-parses the bytes and hands the decoded message to the recipient, so
//! nothing ever flows between parties except through the serialized form.

use serde_json::json;

use crate::field::PartyId;
use crate::prf::Key;

use super::wire;
use super::{BlindedMatrix, ProtocolError, PublicParams, Scheme};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Client-to-cloud dataset upload (both schemes).
    Outsource { party: PartyId, o: BlindedMatrix },
    /// B opens an improved-scheme run with its id only.
    StartRequest { b: PartyId },
    /// B opens a baseline run by handing A its master key.
    StartRequestWithKey { b: PartyId, mk_b: Key },
    /// A's delegation to the cloud (improved).
    DelegationToCloud {
        a: PartyId,
        b: PartyId,
        q: BlindedMatrix,
    },
    /// A ships the delegation key to the cloud (baseline).
    DelegationKeyToCloud { a: PartyId, b: PartyId, tk: Key },
    /// A's masked combination for B (baseline).
    QToB { q: BlindedMatrix },
    /// Cloud result of the improved scheme.
    CloudResultImproved {
        q_prime: BlindedMatrix,
        q_dprime: BlindedMatrix,
    },
    /// Cloud result of the baseline.
    CloudResultEo { t: BlindedMatrix },
}

impl Payload {
    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::Outsource { .. } => "outsource",
            Payload::StartRequest { .. } => "start_request",
            Payload::StartRequestWithKey { .. } => "start_request_with_key",
            Payload::DelegationToCloud { .. } => "delegation_to_cloud",
            Payload::DelegationKeyToCloud { .. } => "delegation_key_to_cloud",
            Payload::QToB { .. } => "q_to_b",
            Payload::CloudResultImproved { .. } => "cloud_result_improved",
            Payload::CloudResultEo { .. } => "cloud_result_eo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: PartyId,
    pub to: PartyId,
    pub payload: Payload,
}

impl Message {
    /// Debug mirror of the wire form; field elements as decimal strings.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "from": self.from.short().to_string(),
            "to": self.to.short().to_string(),
            "type": self.payload.type_name(),
        });
        let obj = v.as_object_mut().expect("object literal");
        let matrix_json = |m: &BlindedMatrix| {
            json!({
                "kind": m.kind().name(),
                "h": m.h(),
                "n": m.n(),
                "rows": m
                    .rows()
                    .iter()
                    .map(|r| r.iter().map(|e| e.value().to_string()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            })
        };
        match &self.payload {
            Payload::Outsource { party, o } => {
                obj.insert("party".into(), json!(party.short().to_string()));
                obj.insert("o".into(), matrix_json(o));
            }
            Payload::StartRequest { b } => {
                obj.insert("b".into(), json!(b.short().to_string()));
            }
            Payload::StartRequestWithKey { b, mk_b } => {
                obj.insert("b".into(), json!(b.short().to_string()));
                obj.insert("mk_b".into(), json!(mk_b.hex()));
            }
            Payload::DelegationToCloud { a, b, q } => {
                obj.insert("a".into(), json!(a.short().to_string()));
                obj.insert("b".into(), json!(b.short().to_string()));
                obj.insert("q".into(), matrix_json(q));
            }
            Payload::DelegationKeyToCloud { a, b, tk } => {
                obj.insert("a".into(), json!(a.short().to_string()));
                obj.insert("b".into(), json!(b.short().to_string()));
                obj.insert("tk".into(), json!(tk.hex()));
            }
            Payload::QToB { q } => {
                obj.insert("q".into(), matrix_json(q));
            }
            Payload::CloudResultImproved { q_prime, q_dprime } => {
                obj.insert("q_prime".into(), matrix_json(q_prime));
                obj.insert("q_dprime".into(), matrix_json(q_dprime));
            }
            Payload::CloudResultEo { t } => {
                obj.insert("t".into(), matrix_json(t));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub seq: u32,
    pub message: Message,
    pub bytes: Vec<u8>,
}

/// Append-only record of one session's traffic, carrying the public
/// parameters so a saved transcript is self-contained.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    scheme: Scheme,
    params: PublicParams,
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(scheme: Scheme, params: PublicParams) -> Transcript {
        Transcript {
            scheme,
            params,
            entries: Vec::new(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn params(&self) -> &PublicParams {
        &self.params
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn push_entry(&mut self, entry: TranscriptEntry) {
        debug_assert_eq!(entry.seq as usize, self.entries.len());
        self.entries.push(entry);
    }

    /// Serializes, records, re-parses, and returns the delivered message.
    /// The round trip is verified on every send, not just in tests.
    pub fn record(&mut self, message: Message) -> Result<Message, ProtocolError> {
        let seq = self.entries.len() as u32;
        let bytes = wire::encode_message(&message, &self.params);
        let delivered = wire::decode_message(&bytes, &self.params)?;
        if delivered != message {
            return Err(ProtocolError::TranscriptMismatch(seq));
        }
        self.push_entry(TranscriptEntry {
            seq,
            message,
            bytes,
        });
        Ok(delivered)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "scheme": self.scheme.name(),
            "messages": self
                .entries
                .iter()
                .map(|e| {
                    let mut m = e.message.to_json();
                    let obj = m.as_object_mut().expect("object");
                    obj.insert("seq".into(), json!(e.seq));
                    obj.insert("wire_bytes".into(), json!(e.bytes.len()));
                    m
                })
                .collect::<Vec<_>>(),
        })
    }
}
