//! Polynomials over the prime field, in coefficient and point-value form.
//!
//! Sets are represented as monic polynomials vanishing on their elements;
//! the protocol evaluates them at a public point vector, ships blinded
//! values around, and the receiving client interpolates each bin back into
//! coefficient form and extracts the roots. Lagrange interpolation is the
//! O(n^2) textbook construction: n stays in the tens-to-low-hundreds and
//! the evaluation points are arbitrary field elements, so there is nothing
//! for an FFT to exploit.
//!
//! Root extraction takes the squarefree part, splits off the product of
//! linear factors with gcd(f, x^p - x) (computing x^p mod f by repeated
//! squaring), and then splits that product recursively with
//! gcd(r, (x + delta)^((p-1)/2) - 1) for deltas drawn from a stream seeded
//! by the polynomial itself, so any failure reproduces exactly. Only roots
//! in F_p are ever needed; factors of higher degree are discarded
//! unfactored.
//!
//! Interpolation and root extraction are priced as unit events: they bump
//! their own counters, and the field operations they spend internally are
//! kept in the `inner_*` tallies (see [`Tally`](crate::field::Tally)).

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{Field, FieldElement, OpCounters};
use crate::prf::{prf_field, prf_field_nonzero, Key};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("operation undefined for the zero polynomial")]
    ZeroPolynomial,
    #[error("polynomial division by zero")]
    DivisionByZero,
    #[error("gcd of two zero polynomials")]
    GcdOfZeros,
    #[error("evaluation points must be pairwise distinct")]
    RepeatedEvalPoint,
    #[error("point-value form needs as many values as points")]
    LengthMismatch,
}

/// Dense coefficient form; index k holds the coefficient of x^k. Canonical:
/// no trailing zeros, and the zero polynomial has an empty vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    field: Field,
    coeffs: Vec<FieldElement>,
}

impl Polynomial {
    pub fn zero(field: Field) -> Polynomial {
        Polynomial {
            field,
            coeffs: Vec::new(),
        }
    }

    pub fn one(field: Field) -> Polynomial {
        Polynomial::constant(field.one())
    }

    pub fn constant(c: FieldElement) -> Polynomial {
        Polynomial::from_coeffs(c.field(), vec![c])
    }

    /// The monomial x.
    pub fn x(field: Field) -> Polynomial {
        Polynomial::from_coeffs(field, vec![field.zero(), field.one()])
    }

    pub fn from_coeffs(field: Field, mut coeffs: Vec<FieldElement>) -> Polynomial {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Polynomial { field, coeffs }
    }

    /// Monic polynomial vanishing exactly on the given root multiset.
    /// An empty list gives the constant 1.
    pub fn from_roots(field: Field, roots: &[FieldElement], ctr: &mut OpCounters) -> Polynomial {
        let mut coeffs = vec![field.one()];
        for &r in roots {
            let neg_r = r.neg(ctr);
            let mut next = Vec::with_capacity(coeffs.len() + 1);
            next.push(coeffs[0].mul(neg_r, ctr));
            for k in 1..coeffs.len() {
                next.push(coeffs[k - 1].add(coeffs[k].mul(neg_r, ctr), ctr));
            }
            next.push(*coeffs.last().expect("nonempty"));
            coeffs = next;
        }
        Polynomial { field, coeffs }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    /// Coefficient of x^k, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> FieldElement {
        self.coeffs
            .get(k)
            .copied()
            .unwrap_or_else(|| self.field.zero())
    }

    /// None for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> Option<FieldElement> {
        self.coeffs.last().copied()
    }

    /// Horner evaluation: exactly deg(f) multiplications and deg(f)
    /// additions, the convention the cost model is built on.
    pub fn eval(&self, x: FieldElement, ctr: &mut OpCounters) -> FieldElement {
        let Some(&lead) = self.coeffs.last() else {
            return self.field.zero();
        };
        let mut acc = lead;
        for &c in self.coeffs.iter().rev().skip(1) {
            acc = acc.mul(x, ctr).add(c, ctr);
        }
        acc
    }

    pub fn add(&self, other: &Polynomial, ctr: &mut OpCounters) -> Polynomial {
        let (longer, shorter) = if self.coeffs.len() >= other.coeffs.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut coeffs = longer.coeffs.clone();
        for (k, &c) in shorter.coeffs.iter().enumerate() {
            coeffs[k] = coeffs[k].add(c, ctr);
        }
        Polynomial::from_coeffs(self.field, coeffs)
    }

    pub fn sub(&self, other: &Polynomial, ctr: &mut OpCounters) -> Polynomial {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(self.coeffs.len().max(other.coeffs.len()), self.field.zero());
        for (k, &c) in other.coeffs.iter().enumerate() {
            coeffs[k] = coeffs[k].sub(c, ctr);
        }
        Polynomial::from_coeffs(self.field, coeffs)
    }

    /// Schoolbook product; deg(fg) = deg f + deg g.
    pub fn mul(&self, other: &Polynomial, ctr: &mut OpCounters) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero(self.field);
        }
        let mut coeffs = vec![self.field.zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].add(a.mul(b, ctr), ctr);
            }
        }
        Polynomial::from_coeffs(self.field, coeffs)
    }

    /// Scales every coefficient by `s`.
    pub fn scale(&self, s: FieldElement, ctr: &mut OpCounters) -> Polynomial {
        let coeffs = self.coeffs.iter().map(|c| c.mul(s, ctr)).collect();
        Polynomial::from_coeffs(self.field, coeffs)
    }

    /// Long division: `self = q * div + r` with deg r < deg div.
    pub fn divrem(
        &self,
        div: &Polynomial,
        ctr: &mut OpCounters,
    ) -> Result<(Polynomial, Polynomial), PolyError> {
        let Some(dd) = div.degree() else {
            return Err(PolyError::DivisionByZero);
        };
        if self.coeffs.len() <= dd {
            return Ok((Polynomial::zero(self.field), self.clone()));
        }
        let lead_inv = div.coeffs[dd]
            .inv(ctr)
            .expect("canonical polynomial has a nonzero leading coefficient");
        let mut rem = self.coeffs.clone();
        let mut quot = vec![self.field.zero(); rem.len() - dd];
        while rem.len() > dd {
            let k = rem.len() - 1;
            let lead = rem[k];
            if lead.is_zero() {
                rem.pop();
                continue;
            }
            let q = lead.mul(lead_inv, ctr);
            quot[k - dd] = q;
            for t in 0..dd {
                rem[k - dd + t] = rem[k - dd + t].sub(q.mul(div.coeffs[t], ctr), ctr);
            }
            rem.pop(); // leading term cancels exactly
        }
        Ok((
            Polynomial::from_coeffs(self.field, quot),
            Polynomial::from_coeffs(self.field, rem),
        ))
    }

    /// Exact division by the linear factor (x - a); the remainder is
    /// discarded, so only call this when a is a known root of the master
    /// product construction.
    fn deflate(&self, a: FieldElement, ctr: &mut OpCounters) -> Polynomial {
        let d = self.degree().expect("deflate of a nonzero polynomial");
        let mut out = vec![self.field.zero(); d];
        let mut carry = self.coeffs[d];
        for k in (1..=d).rev() {
            out[k - 1] = carry;
            if k > 1 {
                carry = self.coeffs[k - 1].add(a.mul(carry, ctr), ctr);
            }
        }
        Polynomial::from_coeffs(self.field, out)
    }

    /// Monic normalization. Errors on the zero polynomial.
    pub fn into_monic(self, ctr: &mut OpCounters) -> Result<Polynomial, PolyError> {
        let lead = self.leading().ok_or(PolyError::ZeroPolynomial)?;
        if lead == self.field.one() {
            return Ok(self);
        }
        let inv = lead.inv(ctr).expect("leading coefficient nonzero");
        Ok(self.scale(inv, ctr))
    }

    /// Monic gcd by the Euclidean algorithm. Errors when both inputs are
    /// zero; gcd(f, 0) is the monic normalization of f.
    pub fn gcd(&self, other: &Polynomial, ctr: &mut OpCounters) -> Result<Polynomial, PolyError> {
        if self.is_zero() && other.is_zero() {
            return Err(PolyError::GcdOfZeros);
        }
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let r = a.divrem(&b, ctr)?.1;
            a = b;
            b = r;
        }
        a.into_monic(ctr)
    }

    /// Formal derivative. Coefficient indices are reduced mod p, which is
    /// the correct derivative in characteristic p.
    pub fn derivative(&self, ctr: &mut OpCounters) -> Polynomial {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c.mul(self.field.elem(k as u64), ctr))
            .collect();
        Polynomial::from_coeffs(self.field, coeffs)
    }

    /// f / gcd(f, f'), monic: same roots, all with multiplicity one.
    /// Assumes multiplicities below the field characteristic.
    pub fn squarefree_part(&self, ctr: &mut OpCounters) -> Result<Polynomial, PolyError> {
        if self.is_zero() {
            return Err(PolyError::ZeroPolynomial);
        }
        if self.degree() == Some(0) {
            return Ok(Polynomial::one(self.field));
        }
        let g = self.gcd(&self.derivative(ctr), ctr)?;
        let (q, r) = self.divrem(&g, ctr)?;
        debug_assert!(r.is_zero(), "gcd(f, f') divides f");
        q.into_monic(ctr)
    }
}

/// A polynomial given by its values at n distinct points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointValuePoly {
    xs: Vec<FieldElement>,
    ys: Vec<FieldElement>,
}

impl PointValuePoly {
    pub fn new(xs: Vec<FieldElement>, ys: Vec<FieldElement>) -> Result<PointValuePoly, PolyError> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(PolyError::LengthMismatch);
        }
        let distinct: BTreeSet<u64> = xs.iter().map(|x| x.value()).collect();
        if distinct.len() != xs.len() {
            return Err(PolyError::RepeatedEvalPoint);
        }
        Ok(PointValuePoly { xs, ys })
    }

    pub fn xs(&self) -> &[FieldElement] {
        &self.xs
    }

    pub fn ys(&self) -> &[FieldElement] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Lagrange interpolation through all n pairs: the unique polynomial of
/// degree < n. One interpolation event is tallied; the O(n^2) field
/// operations inside land in the `inner_*` rows.
pub fn interpolate(points: &PointValuePoly, ctr: &mut OpCounters) -> Polynomial {
    ctr.count_interpolation();
    ctr.begin_unit();
    let field = points.xs[0].field();
    // Master product M(x) = prod (x - x_i); each basis polynomial is
    // M / (x - x_i), scaled to hit y_i at x_i.
    let master = Polynomial::from_roots(field, &points.xs, ctr);
    let mut acc = Polynomial::zero(field);
    for (&xi, &yi) in points.xs.iter().zip(&points.ys) {
        let basis = master.deflate(xi, ctr);
        let denom = basis.eval(xi, ctr);
        let scale = yi.mul(
            denom
                .inv(ctr)
                .expect("distinct evaluation points give nonzero denominators"),
            ctr,
        );
        acc = acc.add(&basis.scale(scale, ctr), ctr);
    }
    ctr.end_unit();
    acc
}

/// Pseudorandom polynomial of exactly the requested degree: coefficients
/// are PRF expansions of the seed, and the leading one uses the nonzero
/// variant so the degree never silently drops.
pub fn random_poly(seed: &Key, degree: usize, field: Field) -> Polynomial {
    let mut coeffs: Vec<FieldElement> = (0..degree as u64)
        .map(|k| prf_field(seed, k, field))
        .collect();
    coeffs.push(prf_field_nonzero(seed, degree as u64, field));
    Polynomial { field, coeffs }
}

/// All distinct roots of f in F_p. One factorization event is tallied per
/// call; internal arithmetic lands in the `inner_*` rows.
pub fn find_roots(
    f: &Polynomial,
    ctr: &mut OpCounters,
) -> Result<BTreeSet<FieldElement>, PolyError> {
    if f.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    ctr.count_factorization();
    ctr.begin_unit();
    let result = find_roots_inner(f, ctr);
    ctr.end_unit();
    result
}

fn find_roots_inner(
    f: &Polynomial,
    ctr: &mut OpCounters,
) -> Result<BTreeSet<FieldElement>, PolyError> {
    let field = f.field();
    let p = field.modulus();
    let mut roots = BTreeSet::new();
    if p == 2 {
        for v in 0..2 {
            if f.eval(field.elem(v), ctr).is_zero() {
                roots.insert(field.elem(v));
            }
        }
        return Ok(roots);
    }
    let sf = f.squarefree_part(ctr)?;
    if sf.degree() == Some(0) {
        return Ok(roots);
    }
    // gcd(f, x^p - x) collects exactly the linear factors.
    let x = Polynomial::x(field);
    let xp = modpow(&x, p, &sf, ctr)?;
    let linear_product = sf.gcd(&xp.sub(&x, ctr), ctr)?;
    let mut deltas = DeltaStream::new(f);
    split_linear(&linear_product, &mut deltas, &mut roots, ctr)?;
    Ok(roots)
}

/// `g` is monic with all factors linear and distinct. Splits recursively on
/// gcd(g, (x + delta)^((p-1)/2) - 1): each root r lands on the quadratic-
/// residue side depending on r + delta, so a fresh delta separates any two
/// roots with probability about 1/2.
fn split_linear(
    g: &Polynomial,
    deltas: &mut DeltaStream,
    out: &mut BTreeSet<FieldElement>,
    ctr: &mut OpCounters,
) -> Result<(), PolyError> {
    match g.degree() {
        None | Some(0) => Ok(()),
        Some(1) => {
            out.insert(g.coeff(0).neg(ctr));
            Ok(())
        }
        Some(dg) => {
            let field = g.field();
            let half = (field.modulus() - 1) / 2;
            loop {
                let delta = deltas.next(field);
                let base = Polynomial::from_coeffs(field, vec![delta, field.one()]);
                let s = modpow(&base, half, g, ctr)?;
                let split = g.gcd(&s.sub(&Polynomial::one(field), ctr), ctr)?;
                if let Some(ds) = split.degree() {
                    if ds > 0 && ds < dg {
                        let (rest, r) = g.divrem(&split, ctr)?;
                        debug_assert!(r.is_zero());
                        split_linear(&split, deltas, out, ctr)?;
                        split_linear(&rest, deltas, out, ctr)?;
                        return Ok(());
                    }
                }
            }
        }
    }
}

/// base^e mod m, left-to-right square-and-multiply over a monic modulus
/// of degree >= 1.
///
/// This is the root extractor's hot loop (x^p and the splitting powers),
/// so it runs on raw residues and books its operation counts in bulk; the
/// tallies still reflect exactly the multiplications and additions
/// performed.
fn modpow(
    base: &Polynomial,
    e: u64,
    m: &Polynomial,
    ctr: &mut OpCounters,
) -> Result<Polynomial, PolyError> {
    debug_assert!(m.degree() >= Some(1));
    debug_assert_eq!(m.leading(), Some(m.field().one()), "monic modulus");
    let field = m.field();
    if e == 0 {
        return Ok(Polynomial::one(field));
    }
    let mvals: Vec<u64> = m.coeffs().iter().map(|c| c.value()).collect();
    let mut muls = 0u64;
    let mut adds = 0u64;
    let reducer = MonicReducer::new(&mvals, field, &mut muls, &mut adds);
    let mut acc: Vec<u64> = base.coeffs().iter().map(|c| c.value()).collect();
    reducer.reduce(&mut acc, field, &mut muls, &mut adds);
    let base_reduced = acc.clone();
    let mut scratch: Vec<u64> = Vec::new();
    let bits = 64 - e.leading_zeros();
    for k in (0..bits - 1).rev() {
        square_raw(&acc, &mut scratch, field, &mut muls, &mut adds);
        std::mem::swap(&mut acc, &mut scratch);
        reducer.reduce(&mut acc, field, &mut muls, &mut adds);
        if (e >> k) & 1 == 1 {
            mul_raw(
                &acc,
                &base_reduced,
                &mut scratch,
                field,
                &mut muls,
                &mut adds,
            );
            std::mem::swap(&mut acc, &mut scratch);
            reducer.reduce(&mut acc, field, &mut muls, &mut adds);
        }
    }
    ctr.count_muls_bulk(muls);
    ctr.count_adds_bulk(adds);
    Ok(Polynomial::from_coeffs(
        field,
        acc.into_iter().map(|v| field.elem(v)).collect(),
    ))
}

fn trim_raw(v: &mut Vec<u64>) {
    while v.last() == Some(&0) {
        v.pop();
    }
}

/// How many full-width products fit in a u128 accumulator before it can
/// wrap. 63 for the default 61-bit modulus; columns within this budget
/// accumulate lazily and reduce once.
fn lazy_budget(field: Field) -> usize {
    let sq = (field.modulus() - 1) as u128 * (field.modulus() - 1) as u128;
    (u128::MAX / sq.max(1)).min(1 << 20) as usize
}

/// Schoolbook product into `out`, column-wise.
fn mul_raw(a: &[u64], b: &[u64], out: &mut Vec<u64>, field: Field, muls: &mut u64, adds: &mut u64) {
    out.clear();
    if a.is_empty() || b.is_empty() {
        return;
    }
    let columns = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= lazy_budget(field) {
        for k in 0..columns {
            let lo = (k + 1).saturating_sub(b.len());
            let hi = k.min(a.len() - 1);
            let mut acc: u128 = 0;
            for i in lo..=hi {
                acc += a[i] as u128 * b[k - i] as u128;
            }
            out.push(field.reduce128(acc));
        }
    } else {
        out.resize(columns, 0);
        for (i, &ai) in a.iter().enumerate() {
            for (o, &bj) in out[i..].iter_mut().zip(b) {
                *o = field.add_raw(*o, field.mul_raw(ai, bj));
            }
        }
    }
    *muls += (a.len() * b.len()) as u64;
    *adds += (a.len() * b.len()) as u64;
    trim_raw(out);
}

/// Squaring with the symmetric terms doubled instead of recomputed.
fn square_raw(a: &[u64], out: &mut Vec<u64>, field: Field, muls: &mut u64, adds: &mut u64) {
    out.clear();
    if a.is_empty() {
        return;
    }
    let columns = 2 * a.len() - 1;
    if a.len() <= lazy_budget(field) / 2 {
        for k in 0..columns {
            let mut acc: u128 = 0;
            let mut i = (k + 1).saturating_sub(a.len());
            while 2 * i < k {
                acc += a[i] as u128 * a[k - i] as u128;
                i += 1;
            }
            acc *= 2;
            if k % 2 == 0 {
                acc += a[k / 2] as u128 * a[k / 2] as u128;
            }
            out.push(field.reduce128(acc));
        }
        let n = a.len() as u64;
        *muls += n * (n + 1) / 2;
        *adds += n * n;
    } else {
        out.resize(columns, 0);
        for (i, &ai) in a.iter().enumerate() {
            out[2 * i] = field.add_raw(out[2 * i], field.mul_raw(ai, ai));
            *muls += 1;
            *adds += 1;
            let cross_start = 2 * i + 1;
            for (o, &aj) in out[cross_start..].iter_mut().zip(&a[i + 1..]) {
                let cross = field.mul_raw(ai, aj);
                *o = field.add_raw(*o, field.add_raw(cross, cross));
                *muls += 1;
                *adds += 2;
            }
        }
    }
    trim_raw(out);
}

/// Remainder machinery for one fixed monic modulus. The powers
/// x^(md+t) mod m are tabulated once, so reducing a product of two
/// residues is a small matrix-vector product whose columns accumulate
/// lazily in u128, and every squaring inside a modpow shares the table.
struct MonicReducer {
    md: usize,
    table: Vec<Vec<u64>>,
}

impl MonicReducer {
    fn new(m: &[u64], field: Field, muls: &mut u64, adds: &mut u64) -> MonicReducer {
        let md = m.len() - 1;
        let p = field.modulus();
        let mut table: Vec<Vec<u64>> = Vec::new();
        if md >= 1 {
            // x^md mod m = -m_low for a monic m.
            let mut r: Vec<u64> = m[..md]
                .iter()
                .map(|&c| if c == 0 { 0 } else { p - c })
                .collect();
            *adds += md as u64;
            for _ in 1..md {
                table.push(r.clone());
                // r <- x * r mod m
                let lead = *r.last().expect("md >= 1");
                r.rotate_right(1);
                r[0] = 0;
                if lead != 0 {
                    for (ri, &ti) in r.iter_mut().zip(&table[0]) {
                        *ri = field.add_raw(*ri, field.mul_raw(lead, ti));
                    }
                    *muls += md as u64;
                    *adds += md as u64;
                }
            }
            table.push(r);
        }
        MonicReducer { md, table }
    }

    fn reduce(&self, v: &mut Vec<u64>, field: Field, muls: &mut u64, adds: &mut u64) {
        if v.len() <= self.md {
            return;
        }
        let overflow = v.len() - self.md;
        debug_assert!(overflow <= self.table.len());
        if overflow <= lazy_budget(field).saturating_sub(1) {
            for i in 0..self.md {
                let mut acc = v[i] as u128;
                for t in 0..overflow {
                    acc += v[self.md + t] as u128 * self.table[t][i] as u128;
                }
                v[i] = field.reduce128(acc);
            }
        } else {
            for i in 0..self.md {
                let mut acc = v[i];
                for t in 0..overflow {
                    acc = field.add_raw(acc, field.mul_raw(v[self.md + t], self.table[t][i]));
                }
                v[i] = acc;
            }
        }
        *muls += (overflow * self.md) as u64;
        *adds += (overflow * self.md) as u64;
        v.truncate(self.md);
        trim_raw(v);
    }
}

/// Splitting randomness, seeded from the polynomial under factorization so
/// runs (and failures) reproduce exactly.
struct DeltaStream {
    seed: [u8; 32],
    counter: u64,
}

impl DeltaStream {
    fn new(f: &Polynomial) -> DeltaStream {
        let mut hasher = Sha256::new();
        hasher.update(f.field().modulus().to_be_bytes());
        for c in f.coeffs() {
            hasher.update(c.value().to_be_bytes());
        }
        DeltaStream {
            seed: hasher.finalize().into(),
            counter: 0,
        }
    }

    fn next(&mut self, field: Field) -> FieldElement {
        let mut hasher = Sha256::new();
        hasher.update(self.seed);
        hasher.update(self.counter.to_be_bytes());
        self.counter += 1;
        let digest: [u8; 32] = hasher.finalize().into();
        let mut wide = [0u8; 16];
        wide.copy_from_slice(&digest[..16]);
        field.elem((u128::from_be_bytes(wide) % field.modulus() as u128) as u64)
    }
}

/// The subset of `candidates` on which f vanishes. This is the cheap
/// retrieval route when the caller already knows which elements could
/// possibly be roots.
pub fn roots_by_candidates(
    f: &Polynomial,
    candidates: &[FieldElement],
    ctr: &mut OpCounters,
) -> BTreeSet<FieldElement> {
    candidates
        .iter()
        .copied()
        .filter(|&c| f.eval(c, ctr).is_zero())
        .collect()
}
