//! Online steps of the improved scheme.
//!
//! Outsourced values are `o = tau(x_i) * z^-1` with invertible blinding.
//! A's delegation carries `q = omega_A(x_i) * z_A`, so the cloud's pointwise
//! product `q' = q * o_A` collapses to `omega_A(x_i) * tau_A(x_i)` without
//! the cloud learning either factor. The cloud masks B's dataset with a
//! polynomial of its own, `q'' = omega_C(x_i) * o_B`, and B finishes with
//! `g = q' + q'' * z_B`, interpolating and factorizing each bin. No message
//! of this scheme contains key material.

use std::collections::BTreeSet;

use crate::field::{OpCounters, PartyId, Phase};
use crate::poly::random_poly;
use crate::prf::{derive_key, expand_blinding, Key};

use super::message::{Message, Payload};
use super::{
    recover_elements, recover_elements_by_candidates, BlindedMatrix, CloudStore, MatrixKind,
    ProtocolError, PublicParams,
};

/// A's delegation: one fresh random polynomial per bin, derived from `tk1`,
/// evaluated at the public points and blinded by A's own `z`. The message
/// carries only field elements and ids.
pub fn delegate(
    a: PartyId,
    b: PartyId,
    mk_a: &Key,
    tk1: &Key,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Message {
    ctr.enter(a, Phase::Online);
    let field = params.field;
    let (h, n, d) = (
        params.table.bins(),
        params.table.points(),
        params.table.capacity(),
    );
    let z_a = expand_blinding(a, mk_a, h, n, true, field);
    let mut rows = Vec::with_capacity(h);
    for j in 1..=h {
        let omega = random_poly(&derive_key(tk1, j as u64), d, field);
        debug_assert_eq!(omega.degree(), Some(d));
        let mut row = Vec::with_capacity(n);
        for (i, &x) in params.xs.iter().enumerate() {
            row.push(omega.eval(x, ctr).mul(z_a.at(j - 1, i), ctr));
        }
        rows.push(row);
    }
    Message {
        from: a,
        to: PartyId::Cloud,
        payload: Payload::DelegationToCloud {
            a,
            b,
            q: BlindedMatrix::new(MatrixKind::Q, rows),
        },
    }
}

/// Cloud-side result computation: `q' = q * o_A` unmasks A's blinding into
/// the product `omega_A * tau_A`, and `q'' = omega_C(x_i) * o_B` masks B's
/// dataset under a cloud-chosen per-session key `tk2`.
pub fn cloud_compute(
    q: &BlindedMatrix,
    a: PartyId,
    b: PartyId,
    tk2: &Key,
    store: &CloudStore,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<Message, ProtocolError> {
    ctr.enter(PartyId::Cloud, Phase::Online);
    let field = params.field;
    let (h, n, d) = (
        params.table.bins(),
        params.table.points(),
        params.table.capacity(),
    );
    q.expect_kind(MatrixKind::Q)?;
    q.expect_dims(params)?;
    let o_a = store.get(a)?;
    let o_b = store.get(b)?;
    o_a.expect_kind(MatrixKind::OMultiplicative)?;
    o_b.expect_kind(MatrixKind::OMultiplicative)?;
    o_a.expect_dims(params)?;
    o_b.expect_dims(params)?;
    let mut q_prime = Vec::with_capacity(h);
    let mut q_dprime = Vec::with_capacity(h);
    for j in 0..h {
        let omega_c = random_poly(&derive_key(tk2, j as u64 + 1), d, field);
        debug_assert_eq!(omega_c.degree(), Some(d));
        let mut prime_row = Vec::with_capacity(n);
        let mut dprime_row = Vec::with_capacity(n);
        for (i, &x) in params.xs.iter().enumerate() {
            prime_row.push(q.at(j, i).mul(o_a.at(j, i), ctr));
            dprime_row.push(omega_c.eval(x, ctr).mul(o_b.at(j, i), ctr));
        }
        q_prime.push(prime_row);
        q_dprime.push(dprime_row);
    }
    Ok(Message {
        from: PartyId::Cloud,
        to: b,
        payload: Payload::CloudResultImproved {
            q_prime: BlindedMatrix::new(MatrixKind::QPrime, q_prime),
            q_dprime: BlindedMatrix::new(MatrixKind::QDoublePrime, q_dprime),
        },
    })
}

/// B's retrieval: re-derive `z_B` from the master key, unblind with
/// `g = q' + q'' * z_B`, then interpolate and factorize every bin and keep
/// the valid roots. This is the canonical route; see
/// [`retrieve_by_candidates`] for the verification route.
pub fn retrieve(
    q_prime: &BlindedMatrix,
    q_dprime: &BlindedMatrix,
    mk_b: &Key,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<BTreeSet<u64>, ProtocolError> {
    ctr.enter(PartyId::ClientB, Phase::Online);
    let g = unblind(q_prime, q_dprime, mk_b, params, ctr)?;
    recover_elements(&g, params, ctr)
}

/// Retrieval that skips factorization and instead tests B's own encoded
/// elements against each interpolated bin polynomial.
pub fn retrieve_by_candidates(
    q_prime: &BlindedMatrix,
    q_dprime: &BlindedMatrix,
    mk_b: &Key,
    own_set: &[u64],
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<BTreeSet<u64>, ProtocolError> {
    let g = unblind(q_prime, q_dprime, mk_b, params, ctr)?;
    recover_elements_by_candidates(&g, own_set, params, ctr)
}

fn unblind(
    q_prime: &BlindedMatrix,
    q_dprime: &BlindedMatrix,
    mk_b: &Key,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<Vec<Vec<crate::field::FieldElement>>, ProtocolError> {
    let (h, n) = (params.table.bins(), params.table.points());
    q_prime.expect_kind(MatrixKind::QPrime)?;
    q_dprime.expect_kind(MatrixKind::QDoublePrime)?;
    q_prime.expect_dims(params)?;
    q_dprime.expect_dims(params)?;
    let z_b = expand_blinding(PartyId::ClientB, mk_b, h, n, true, params.field);
    let g = (0..h)
        .map(|j| {
            (0..n)
                .map(|i| {
                    q_prime
                        .at(j, i)
                        .add(q_dprime.at(j, i).mul(z_b.at(j, i), ctr), ctr)
                })
                .collect()
        })
        .collect();
    Ok(g)
}
