//! The two delegated-PSI schemes as party state machines.
//!
//! Three parties: client A, client B, and a cloud that stores blinded
//! datasets and does the heavy lifting. B is the designated output party.
//! Both schemes share setup and outsourcing; they differ in how values are
//! blinded and in who talks to whom afterwards.
//!
//! * Baseline (`eo`): clients outsource `o = tau(x_i) + z`, additively
//!   blinded. To start an intersection, B hands its master key to A; A
//!   builds a masked combination `q` for B and ships a delegation key `tk`
//!   to the cloud; the cloud rebuilds the same masks over the outsourced
//!   data and returns `t`; B computes `g = t - q` per point, interpolates
//!   each bin, factorizes, and keeps the valid roots. Key material crosses
//!   the wire, so this scheme is only private if every channel is secure.
//!   The [`adversary`](crate::adversary) module demonstrates three
//!   eavesdropping attacks that break it on public channels.
//!
//! * Improved (`improved`): clients outsource `o = tau(x_i) * z^-1`,
//!   multiplicatively blinded by invertible PRF values. B only sends its
//!   id; A sends the cloud `q = omega_A(x_i) * z_A`, the cloud multiplies
//!   pointwise to cancel A's blinding (`q' = q * o_A = omega_A * tau_A`),
//!   masks B's dataset with its own random polynomial
//!   (`q'' = omega_C * o_B`), and B unblinds with
//!   `g = q' + q'' * z_B = omega_A tau_A + omega_C tau_B`. No key ever
//!   leaves its owner.
//!
//! Every message is serialized, recorded in an append-only transcript, and
//! re-parsed before delivery, so the session driver exercises exactly the
//! bytes a wire eavesdropper would see.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bins::{
    build_table, sample_eval_points, suggest_bin_count, BinsError, EncodingParams, HashTableParams,
};
use crate::field::{Field, FieldElement, FieldError, OpCounters, PartyId, Phase};
use crate::poly::{
    find_roots, interpolate, roots_by_candidates, PointValuePoly, PolyError, Polynomial,
};
use crate::prf::{derive_key, expand_blinding, Key, KeyLabel};

pub mod eo;
pub mod improved;
pub mod message;
pub mod session;
pub mod wire;

pub use message::{Message, Payload, Transcript};
pub use session::{run_session, run_session_with_params, SessionConfig, SessionOutcome};

pub const HASH_SPEC: &str = "sha-256";
pub const PRF_SPEC: &str = "hmac-sha-256";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("set cardinality {size} exceeds the bound c = {bound}")]
    CardinalityExceeded { size: usize, bound: usize },
    #[error("no outsourced dataset stored for party {0}")]
    MissingDataset(PartyId),
    #[error("matrix dimensions {got_h}x{got_n} do not match the {want_h}x{want_n} table")]
    DimensionMismatch {
        got_h: usize,
        got_n: usize,
        want_h: usize,
        want_n: usize,
    },
    #[error("expected a {} matrix, got {} (scheme mismatch?)", .expected.name(), .got.name())]
    WrongMatrixKind {
        expected: MatrixKind,
        got: MatrixKind,
    },
    #[error("unexpected message for this step: {0}")]
    UnexpectedMessage(&'static str),
    #[error("recorded bytes did not re-parse to the original message (seq {0})")]
    TranscriptMismatch(u32),
    #[error(transparent)]
    Bins(#[from] BinsError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Wire(#[from] wire::WireError),
    #[error("in step {step}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<ProtocolError>,
    },
}

impl ProtocolError {
    pub fn in_step(self, step: &'static str) -> ProtocolError {
        ProtocolError::Step {
            step,
            source: Box::new(self),
        }
    }
}

/// Which of the two schemes a session runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    Eo,
    Improved,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Eo => "eo",
            Scheme::Improved => "improved",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "eo" => Some(Scheme::Eo),
            "improved" => Some(Scheme::Improved),
            _ => None,
        }
    }
}

/// What an h-by-n grid of field elements means on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// `tau(x_i) + z`, the baseline's outsourced form.
    OAdditive,
    /// `tau(x_i) * z^-1`, the improved scheme's outsourced form.
    OMultiplicative,
    /// A's delegation values.
    Q,
    /// Cloud output `q * o_A` (improved).
    QPrime,
    /// Cloud output `omega_C(x_i) * o_B` (improved).
    QDoublePrime,
    /// Cloud output of the baseline.
    T,
}

impl MatrixKind {
    pub fn name(&self) -> &'static str {
        match self {
            MatrixKind::OAdditive => "o_additive",
            MatrixKind::OMultiplicative => "o_multiplicative",
            MatrixKind::Q => "q",
            MatrixKind::QPrime => "q_prime",
            MatrixKind::QDoublePrime => "q_dprime",
            MatrixKind::T => "t",
        }
    }
}

/// An h-by-n grid of field elements, tagged with its protocol meaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindedMatrix {
    kind: MatrixKind,
    rows: Vec<Vec<FieldElement>>,
}

impl BlindedMatrix {
    pub fn new(kind: MatrixKind, rows: Vec<Vec<FieldElement>>) -> BlindedMatrix {
        assert!(!rows.is_empty());
        let n = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == n), "ragged matrix");
        BlindedMatrix { kind, rows }
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn h(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<FieldElement>] {
        &self.rows
    }

    /// Entry for bin `j` and point `i`, zero-based.
    pub fn at(&self, j: usize, i: usize) -> FieldElement {
        self.rows[j][i]
    }

    fn expect_kind(&self, expected: MatrixKind) -> Result<(), ProtocolError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(ProtocolError::WrongMatrixKind {
                expected,
                got: self.kind,
            })
        }
    }

    fn expect_dims(&self, params: &PublicParams) -> Result<(), ProtocolError> {
        let (h, n) = (params.table.bins(), params.table.points());
        if self.h() == h && self.n() == n {
            Ok(())
        } else {
            Err(ProtocolError::DimensionMismatch {
                got_h: self.h(),
                got_n: self.n(),
                want_h: h,
                want_n: n,
            })
        }
    }
}

/// The cloud-published public parameters every party computes against.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicParams {
    pub field: Field,
    /// Set cardinality upper bound c.
    pub cardinality: usize,
    pub table: HashTableParams,
    pub enc: EncodingParams,
    /// The shared evaluation vector, |xs| = n = 2d + 1.
    pub xs: Vec<FieldElement>,
    pub hash_spec: String,
    pub prf_spec: String,
}

impl PublicParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.xs.len() != self.table.points() {
            return Err(ProtocolError::Config(format!(
                "expected {} evaluation points, got {}",
                self.table.points(),
                self.xs.len()
            )));
        }
        self.enc.validate(self.field)?;
        Ok(())
    }
}

/// Knobs for cloud-side setup.
#[derive(Debug, Clone, Copy)]
pub struct SetupConfig {
    pub prime: u64,
    pub cardinality: usize,
    /// Maximum bin size d.
    pub capacity: usize,
    /// Budget for the probability that any bin overflows.
    pub fail_prob: f64,
    pub enc: EncodingParams,
}

impl Default for SetupConfig {
    fn default() -> Self {
        SetupConfig {
            prime: crate::field::MERSENNE61,
            cardinality: 50,
            capacity: 10,
            fail_prob: crate::bins::DEFAULT_FAIL_PROB,
            enc: EncodingParams::default(),
        }
    }
}

/// Cloud-side setup: checks the prime, sizes the hash table so overflow
/// stays under the failure budget, and samples the public evaluation
/// vector. Deterministic in the seed.
pub fn cloud_setup(cfg: &SetupConfig, xs_seed: &Key) -> Result<PublicParams, ProtocolError> {
    if cfg.cardinality < 1 {
        return Err(ProtocolError::Config(
            "cardinality bound must be >= 1".into(),
        ));
    }
    if cfg.capacity < 1 {
        return Err(ProtocolError::Config("bin capacity must be >= 1".into()));
    }
    if !(cfg.fail_prob > 0.0 && cfg.fail_prob < 1.0) {
        return Err(ProtocolError::Config(format!(
            "fail_prob must be in (0, 1), got {}",
            cfg.fail_prob
        )));
    }
    let field = Field::new(cfg.prime).map_err(|e| ProtocolError::Config(e.to_string()))?;
    cfg.enc.validate(field)?;
    let h = suggest_bin_count(cfg.cardinality, cfg.capacity, cfg.fail_prob);
    let table = HashTableParams::new(h, cfg.capacity);
    let xs = sample_eval_points(table.points(), xs_seed, &cfg.enc, field);
    let params = PublicParams {
        field,
        cardinality: cfg.cardinality,
        table,
        enc: cfg.enc,
        xs,
        hash_spec: HASH_SPEC.to_string(),
        prf_spec: PRF_SPEC.to_string(),
    };
    params.validate()?;
    Ok(params)
}

/// Root seed from which every key of a session is derived, so a run is a
/// pure function of 16 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSeeds {
    root: Key,
}

impl SessionSeeds {
    pub fn from_bytes(bytes: [u8; 16]) -> SessionSeeds {
        SessionSeeds {
            root: Key::new(bytes, KeyLabel::Derived),
        }
    }

    fn sub(&self, index: u64, label: KeyLabel) -> Key {
        derive_key(&self.root, index).with_label(label)
    }

    pub fn xs_seed(&self) -> Key {
        self.sub(0, KeyLabel::Derived)
    }

    pub fn keys(&self) -> SessionKeys {
        SessionKeys {
            mk_a: self.sub(1, KeyLabel::MasterA),
            mk_b: self.sub(2, KeyLabel::MasterB),
            pad_a: self.sub(3, KeyLabel::Derived),
            pad_b: self.sub(4, KeyLabel::Derived),
            tk: self.sub(5, KeyLabel::Tk),
            tk1: self.sub(6, KeyLabel::Tk1),
            tk2: self.sub(7, KeyLabel::Tk2),
        }
    }
}

/// Every secret a session mints. The baseline uses `tk`; the improved
/// scheme uses `tk1` (A) and `tk2` (cloud, fresh per session).
#[derive(Debug, Clone, Copy)]
pub struct SessionKeys {
    pub mk_a: Key,
    pub mk_b: Key,
    pub pad_a: Key,
    pub pad_b: Key,
    pub tk: Key,
    pub tk1: Key,
    pub tk2: Key,
}

impl SessionKeys {
    pub fn all(&self) -> [Key; 7] {
        [
            self.mk_a, self.mk_b, self.pad_a, self.pad_b, self.tk, self.tk1, self.tk2,
        ]
    }

    pub fn master_for(&self, party: PartyId) -> Key {
        match party {
            PartyId::ClientA => self.mk_a,
            PartyId::ClientB => self.mk_b,
            PartyId::Cloud => panic!("the cloud holds no master key"),
        }
    }

    pub fn pad_for(&self, party: PartyId) -> Key {
        match party {
            PartyId::ClientA => self.pad_a,
            PartyId::ClientB => self.pad_b,
            PartyId::Cloud => panic!("the cloud outsources nothing"),
        }
    }
}

/// Client-side setup and outsourcing, shared by both schemes.
///
/// Builds the padded bin table, evaluates every bin polynomial at the
/// public points by Horner, and blinds: additively for the baseline,
/// multiplicatively by the inverse of a nonzero PRF value for the improved
/// scheme. Tallied under the outsource phase.
pub fn outsource(
    party: PartyId,
    set: &[u64],
    mk: &Key,
    pad_seed: &Key,
    params: &PublicParams,
    scheme: Scheme,
    ctr: &mut OpCounters,
) -> Result<Message, ProtocolError> {
    if set.len() > params.cardinality {
        return Err(ProtocolError::CardinalityExceeded {
            size: set.len(),
            bound: params.cardinality,
        });
    }
    ctr.enter(party, Phase::Outsource);
    let field = params.field;
    let (h, n, d) = (
        params.table.bins(),
        params.table.points(),
        params.table.capacity(),
    );
    let table = build_table(set, &params.table, &params.enc, field, pad_seed, &params.xs)?;
    let nonzero = scheme == Scheme::Improved;
    let z = expand_blinding(party, mk, h, n, nonzero, field);
    let mut rows = Vec::with_capacity(h);
    for j in 1..=h {
        let tau = Polynomial::from_roots(field, table.bin(j), ctr);
        debug_assert_eq!(tau.degree(), Some(d), "padded bins give exact degree d");
        let mut row = Vec::with_capacity(n);
        for (i, &x) in params.xs.iter().enumerate() {
            let v = tau.eval(x, ctr);
            debug_assert!(!v.is_zero(), "bin entries are sampled away from xs");
            row.push(match scheme {
                Scheme::Eo => v.add(z.at(j - 1, i), ctr),
                Scheme::Improved => v.mul(z.at(j - 1, i).inv(ctr)?, ctr),
            });
        }
        rows.push(row);
    }
    let kind = match scheme {
        Scheme::Eo => MatrixKind::OAdditive,
        Scheme::Improved => MatrixKind::OMultiplicative,
    };
    Ok(Message {
        from: party,
        to: PartyId::Cloud,
        payload: Payload::Outsource {
            party,
            o: BlindedMatrix::new(kind, rows),
        },
    })
}

/// The cloud's record of outsourced datasets, keyed by owner. Receiving a
/// second dataset for the same party overwrites the first.
#[derive(Debug, Clone, Default)]
pub struct CloudStore {
    datasets: BTreeMap<PartyId, BlindedMatrix>,
}

impl CloudStore {
    pub fn new() -> CloudStore {
        CloudStore::default()
    }

    pub fn receive(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        match &msg.payload {
            Payload::Outsource { party, o } => {
                self.insert(*party, o.clone());
                Ok(())
            }
            _ => Err(ProtocolError::UnexpectedMessage(
                "cloud store only accepts outsourcing messages",
            )),
        }
    }

    pub fn insert(&mut self, party: PartyId, o: BlindedMatrix) {
        self.datasets.insert(party, o);
    }

    pub fn get(&self, party: PartyId) -> Result<&BlindedMatrix, ProtocolError> {
        self.datasets
            .get(&party)
            .ok_or(ProtocolError::MissingDataset(party))
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.datasets.keys().copied()
    }
}

/// Interpolates each bin row over the public points, extracts all roots,
/// and keeps the ones that decode as valid element encodings: the
/// canonical result-retrieval path of both schemes, and the workhorse of
/// the eavesdropper attacks.
pub fn recover_elements(
    rows: &[Vec<FieldElement>],
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<std::collections::BTreeSet<u64>, ProtocolError> {
    let mut out = std::collections::BTreeSet::new();
    for row in rows {
        let points = PointValuePoly::new(params.xs.clone(), row.clone())?;
        let g = interpolate(&points, ctr);
        for root in find_roots(&g, ctr)? {
            if let Some(s) = params.enc.decode(root) {
                out.insert(s);
            }
        }
    }
    Ok(out)
}

/// The verification route around factorization: interpolate each bin and
/// test only the caller's own encoded elements for roots. Used to
/// cross-check [`recover_elements`], never as the default path.
pub fn recover_elements_by_candidates(
    rows: &[Vec<FieldElement>],
    own_set: &[u64],
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<std::collections::BTreeSet<u64>, ProtocolError> {
    let h = params.table.bins();
    let mut by_bin: Vec<Vec<FieldElement>> = vec![Vec::new(); h];
    for &s in own_set {
        let e = params.enc.encode(params.field, s)?;
        by_bin[crate::bins::assign_bin(e, h) - 1].push(e);
    }
    let mut out = std::collections::BTreeSet::new();
    for (row, candidates) in rows.iter().zip(&by_bin) {
        if candidates.is_empty() {
            continue;
        }
        let points = PointValuePoly::new(params.xs.clone(), row.clone())?;
        let g = interpolate(&points, ctr);
        for root in roots_by_candidates(&g, candidates, ctr) {
            if let Some(s) = params.enc.decode(root) {
                out.insert(s);
            }
        }
    }
    Ok(out)
}
