//! Prime-field arithmetic with per-party, per-phase operation accounting.
//!
//! Every protocol value is a residue modulo a public prime `p`. The default
//! modulus is the Mersenne prime 2^61 - 1: products fit in `u128` and the
//! reduction is a pair of shifts, while the 61-bit space leaves headroom for
//! the tagged element encoding. Any other `u64` prime is accepted, which the
//! tests use to keep polynomials over tiny fields inspectable.
//!
//! Arithmetic is tallied into an [`OpCounters`] session context owned by the
//! caller, never global state, so concurrent sessions cannot contaminate each
//! other's counts. Subtraction is recorded as an addition; the cost model
//! this library is measured against has no separate subtraction row.

use std::fmt;

use thiserror::Error;

/// The Mersenne prime 2^61 - 1, the default protocol modulus.
pub const MERSENNE61: u64 = (1u64 << 61) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// Protocol role. Client B is the party that learns the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyId {
    ClientA,
    ClientB,
    Cloud,
}

impl PartyId {
    pub const ALL: [PartyId; 3] = [PartyId::ClientA, PartyId::ClientB, PartyId::Cloud];

    pub fn short(&self) -> char {
        match self {
            PartyId::ClientA => 'A',
            PartyId::ClientB => 'B',
            PartyId::Cloud => 'C',
        }
    }

    pub fn from_short(c: char) -> Option<PartyId> {
        match c {
            'A' => Some(PartyId::ClientA),
            'B' => Some(PartyId::ClientB),
            'C' => Some(PartyId::Cloud),
            _ => None,
        }
    }

    fn index(self) -> usize {
        match self {
            PartyId::ClientA => 0,
            PartyId::ClientB => 1,
            PartyId::Cloud => 2,
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short())
    }
}

/// Protocol phase a tally is attributed to. The cost model only compares the
/// online phase; setup and outsourcing are tracked for completeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Setup,
    Outsource,
    Online,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Setup, Phase::Outsource, Phase::Online];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Outsource => "outsource",
            Phase::Online => "online",
        }
    }

    fn index(self) -> usize {
        match self {
            Phase::Setup => 0,
            Phase::Outsource => 1,
            Phase::Online => 2,
        }
    }
}

/// Operation tallies for one (party, phase) slot.
///
/// Interpolation and root extraction are unit events: the field operations
/// they spend internally are recorded in the `inner_*` rows so the headline
/// `adds`/`muls` rows stay comparable with a cost model that prices those
/// routines as single events.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Tally {
    pub adds: u64,
    pub muls: u64,
    pub invs: u64,
    pub interpolations: u64,
    pub factorizations: u64,
    pub inner_adds: u64,
    pub inner_muls: u64,
    pub inner_invs: u64,
}

impl Tally {
    pub fn is_empty(&self) -> bool {
        *self == Tally::default()
    }
}

/// Session-scoped operation counters, keyed by (party, phase).
///
/// One instance is owned by one session and mutated by one thread at a time;
/// counts only ever grow. Protocol drivers call [`OpCounters::enter`] before
/// each step so the arithmetic beneath it lands in the right slot.
#[derive(Debug, Clone)]
pub struct OpCounters {
    slots: [Tally; 9],
    active: usize,
    entered: bool,
    unit_depth: u32,
}

impl Default for OpCounters {
    fn default() -> Self {
        Self::new()
    }
}

impl OpCounters {
    pub fn new() -> Self {
        OpCounters {
            slots: Default::default(),
            active: 0,
            entered: false,
            unit_depth: 0,
        }
    }

    /// Counters with a scope already entered, for oracles, attacks and tests
    /// that need arithmetic but not attribution.
    pub fn scratch() -> Self {
        let mut c = Self::new();
        c.enter(PartyId::Cloud, Phase::Setup);
        c
    }

    /// Direct all subsequent tallies to the given (party, phase) slot.
    pub fn enter(&mut self, party: PartyId, phase: Phase) {
        self.active = party.index() * 3 + phase.index();
        self.entered = true;
    }

    pub fn tally(&self, party: PartyId, phase: Phase) -> &Tally {
        &self.slots[party.index() * 3 + phase.index()]
    }

    #[inline(always)]
    fn slot(&mut self) -> (&mut Tally, bool) {
        debug_assert!(self.entered, "no active counting scope; call enter first");
        (&mut self.slots[self.active], self.unit_depth > 0)
    }

    #[inline(always)]
    pub(crate) fn count_add(&mut self) {
        let (t, inner) = self.slot();
        if inner {
            t.inner_adds += 1;
        } else {
            t.adds += 1;
        }
    }

    #[inline(always)]
    pub(crate) fn count_mul(&mut self) {
        let (t, inner) = self.slot();
        if inner {
            t.inner_muls += 1;
        } else {
            t.muls += 1;
        }
    }

    #[inline(always)]
    pub(crate) fn count_inv(&mut self) {
        let (t, inner) = self.slot();
        if inner {
            t.inner_invs += 1;
        } else {
            t.invs += 1;
        }
    }

    /// Batched tallies for tight loops that count locally.
    pub(crate) fn count_muls_bulk(&mut self, n: u64) {
        let (t, inner) = self.slot();
        if inner {
            t.inner_muls += n;
        } else {
            t.muls += n;
        }
    }

    pub(crate) fn count_adds_bulk(&mut self, n: u64) {
        let (t, inner) = self.slot();
        if inner {
            t.inner_adds += n;
        } else {
            t.adds += n;
        }
    }

    pub(crate) fn count_interpolation(&mut self) {
        self.slot().0.interpolations += 1;
    }

    pub(crate) fn count_factorization(&mut self) {
        self.slot().0.factorizations += 1;
    }

    /// Everything counted until the matching [`end_unit`](Self::end_unit)
    /// goes to the `inner_*` rows of the active slot.
    pub(crate) fn begin_unit(&mut self) {
        self.unit_depth += 1;
    }

    pub(crate) fn end_unit(&mut self) {
        debug_assert!(self.unit_depth > 0);
        self.unit_depth -= 1;
    }
}

/// Parameters of a prime field: the modulus and its bit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Field {
    p: u64,
    bit_length: u32,
}

impl Field {
    /// Builds a field over `p`, rejecting composites with a deterministic
    /// Miller-Rabin check (exact for all 64-bit inputs).
    pub fn new(p: u64) -> Result<Field, FieldError> {
        if !is_prime_u64(p) {
            return Err(FieldError::NotPrime(p));
        }
        let bits = 64 - p.leading_zeros();
        let bit_length = if p.is_power_of_two() { bits - 1 } else { bits };
        Ok(Field { p, bit_length })
    }

    /// The default protocol field over 2^61 - 1.
    pub fn default_protocol() -> Field {
        Field::new(MERSENNE61).expect("2^61 - 1 is prime")
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn bit_length(&self) -> u32 {
        self.bit_length
    }

    /// Canonical element with `v` reduced into `[0, p)`.
    pub fn elem(&self, v: u64) -> FieldElement {
        FieldElement {
            value: v % self.p,
            field: *self,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.elem(0)
    }

    pub fn one(&self) -> FieldElement {
        self.elem(1 % self.p)
    }

    #[inline(always)]
    pub(crate) fn mul_raw(&self, a: u64, b: u64) -> u64 {
        self.reduce128(a as u128 * b as u128)
    }

    #[inline(always)]
    pub(crate) fn add_raw(&self, a: u64, b: u64) -> u64 {
        let s = a as u128 + b as u128;
        if s >= self.p as u128 {
            (s - self.p as u128) as u64
        } else {
            s as u64
        }
    }

    #[inline(always)]
    pub(crate) fn reduce128(&self, x: u128) -> u64 {
        if self.p == MERSENNE61 {
            // x < 2^122, so two folds land in [0, 2^61] and one conditional
            // subtract finishes the job.
            const M: u128 = MERSENNE61 as u128;
            let folded = (x >> 61) + (x & M);
            let mut r = ((folded >> 61) + (folded & M)) as u64;
            if r >= MERSENNE61 {
                r -= MERSENNE61;
            }
            r
        } else {
            (x % self.p as u128) as u64
        }
    }
}

/// A canonical residue in `[0, p)` carrying its field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    field: Field,
}

impl PartialOrd for FieldElement {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FieldElement {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.field.p, self.value).cmp(&(other.field.p, other.value))
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    #[inline]
    fn check_same_field(self, rhs: FieldElement) {
        assert_eq!(
            self.field.p, rhs.field.p,
            "mixed-field operands: p = {} vs p = {}",
            self.field.p, rhs.field.p
        );
    }

    /// `self + rhs`. Panics on mixed-field operands.
    #[inline]
    pub fn add(self, rhs: FieldElement, ctr: &mut OpCounters) -> FieldElement {
        self.check_same_field(rhs);
        ctr.count_add();
        let p = self.field.p as u128;
        let s = self.value as u128 + rhs.value as u128;
        FieldElement {
            value: if s >= p { (s - p) as u64 } else { s as u64 },
            field: self.field,
        }
    }

    /// `self - rhs`, tallied as one addition.
    #[inline]
    pub fn sub(self, rhs: FieldElement, ctr: &mut OpCounters) -> FieldElement {
        self.check_same_field(rhs);
        ctr.count_add();
        let p = self.field.p;
        let value = if self.value >= rhs.value {
            self.value - rhs.value
        } else {
            p - (rhs.value - self.value)
        };
        FieldElement {
            value,
            field: self.field,
        }
    }

    /// `-self`, tallied as one addition.
    #[inline]
    pub fn neg(self, ctr: &mut OpCounters) -> FieldElement {
        ctr.count_add();
        FieldElement {
            value: if self.value == 0 {
                0
            } else {
                self.field.p - self.value
            },
            field: self.field,
        }
    }

    /// `self * rhs`. Panics on mixed-field operands.
    #[inline]
    pub fn mul(self, rhs: FieldElement, ctr: &mut OpCounters) -> FieldElement {
        self.check_same_field(rhs);
        ctr.count_mul();
        FieldElement {
            value: self.field.reduce128(self.value as u128 * rhs.value as u128),
            field: self.field,
        }
    }

    /// Multiplicative inverse by extended Euclid; one inversion tallied.
    ///
    /// A zero here means a blinding value that the key layer should have
    /// kept nonzero, so it is surfaced as an error rather than a panic.
    pub fn inv(self, ctr: &mut OpCounters) -> Result<FieldElement, FieldError> {
        if self.value == 0 {
            return Err(FieldError::ZeroInverse);
        }
        ctr.count_inv();
        let p = self.field.p as i128;
        let (mut t, mut new_t): (i128, i128) = (0, 1);
        let (mut r, mut new_r): (i128, i128) = (p, self.value as i128);
        while new_r != 0 {
            let q = r / new_r;
            (t, new_t) = (new_t, t - q * new_t);
            (r, new_r) = (new_r, r - q * new_r);
        }
        debug_assert_eq!(r, 1, "modulus is prime, gcd must be 1");
        Ok(FieldElement {
            value: t.rem_euclid(p) as u64,
            field: self.field,
        })
    }

    /// `self ^ e` by square-and-multiply; each performed multiplication is
    /// tallied. `0^0 = 1` by convention.
    pub fn pow(self, mut e: u64, ctr: &mut OpCounters) -> FieldElement {
        let mut acc = self.field.one();
        let mut base = self;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base, ctr);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(base, ctr);
            }
        }
        acc
    }
}

/// Deterministic Miller-Rabin; the witness set is exact for all u64 inputs.
fn is_prime_u64(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n == w {
            return true;
        }
        if n % w == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul_mod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow_mod = |mut a: u64, mut e: u64| {
        let mut acc = 1u64;
        a %= n;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul_mod(acc, a);
            }
            a = mul_mod(a, a);
            e >>= 1;
        }
        acc
    };
    'witness: for &w in &WITNESSES {
        let mut x = pow_mod(w, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
