//! Online steps of the baseline scheme.
//!
//! Outsourced values are additively blinded, `o = tau(x_i) + z`. To run an
//! intersection, B first hands its master key `mk_B` to A (the step that
//! makes this scheme depend on secure channels). A derives three key chains
//! from a fresh `tk`: two random polynomials `omega_A`, `omega_B` and a
//! pad `a` per bin. It sends B the masked combination
//! `q = z_A omega_A(x_i) + z_B omega_B(x_i) + a`, plus `tk` to the cloud.
//! The cloud rebuilds the same omegas and pad over the outsourced data,
//! `t = o_A omega_A(x_i) + o_B omega_B(x_i) + a`, and B's difference
//! `g = t - q` is `omega_A tau_A + omega_B tau_B` pointwise, ready to
//! interpolate and factorize per bin.

use std::collections::BTreeSet;

use crate::field::{FieldElement, OpCounters, PartyId, Phase};
use crate::poly::{random_poly, Polynomial};
use crate::prf::{derive_key, expand_blinding, prf_field, BlindingMatrix, Key};

use super::message::{Message, Payload};
use super::{
    recover_elements, recover_elements_by_candidates, BlindedMatrix, CloudStore, MatrixKind,
    ProtocolError, PublicParams,
};

/// The per-bin mask chains derived from `tk`: `omega_A`, `omega_B` and the
/// additive pad, identical on A's side and the cloud's.
struct MaskChains {
    omegas_a: Vec<Polynomial>,
    omegas_b: Vec<Polynomial>,
    pad_keys: Vec<Key>,
}

fn mask_chains(tk: &Key, params: &PublicParams) -> MaskChains {
    let field = params.field;
    let (h, d) = (params.table.bins(), params.table.capacity());
    let k1 = derive_key(tk, 1);
    let k2 = derive_key(tk, 2);
    let k3 = derive_key(tk, 3);
    let mut chains = MaskChains {
        omegas_a: Vec::with_capacity(h),
        omegas_b: Vec::with_capacity(h),
        pad_keys: Vec::with_capacity(h),
    };
    for j in 1..=h as u64 {
        chains.pad_keys.push(derive_key(&k1, j));
        chains
            .omegas_a
            .push(random_poly(&derive_key(&k2, j), d, field));
        chains
            .omegas_b
            .push(random_poly(&derive_key(&k3, j), d, field));
    }
    chains
}

/// `left[j][i] * omega_A_j(x_i) + right[j][i] * omega_B_j(x_i) + a[j][i]`,
/// the shape shared by A's `q` (over blinding values) and the cloud's `t`
/// (over outsourced values).
fn masked_combination(
    left: impl Fn(usize, usize) -> FieldElement,
    right: impl Fn(usize, usize) -> FieldElement,
    chains: &MaskChains,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Vec<Vec<FieldElement>> {
    let (h, n) = (params.table.bins(), params.table.points());
    let mut rows = Vec::with_capacity(h);
    for j in 0..h {
        let mut row = Vec::with_capacity(n);
        for (i, &x) in params.xs.iter().enumerate() {
            let pad = prf_field(&chains.pad_keys[j], i as u64 + 1, params.field);
            let val = left(j, i)
                .mul(chains.omegas_a[j].eval(x, ctr), ctr)
                .add(right(j, i).mul(chains.omegas_b[j].eval(x, ctr), ctr), ctr)
                .add(pad, ctr);
            row.push(val);
        }
        rows.push(row);
    }
    rows
}

/// A's delegation. Consumes the `mk_B` that B sent in the start message,
/// emits the masked combination for B and the delegation key for the cloud.
pub fn delegate(
    a: PartyId,
    b: PartyId,
    mk_a: &Key,
    mk_b: &Key,
    tk: &Key,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> (Message, Message) {
    ctr.enter(a, Phase::Online);
    let (h, n) = (params.table.bins(), params.table.points());
    let z_a = expand_blinding(a, mk_a, h, n, false, params.field);
    let z_b = expand_blinding(b, mk_b, h, n, false, params.field);
    let chains = mask_chains(tk, params);
    let rows = masked_combination(
        |j, i| z_a.at(j, i),
        |j, i| z_b.at(j, i),
        &chains,
        params,
        ctr,
    );
    let q_msg = Message {
        from: a,
        to: b,
        payload: Payload::QToB {
            q: BlindedMatrix::new(MatrixKind::Q, rows),
        },
    };
    let tk_msg = Message {
        from: a,
        to: PartyId::Cloud,
        payload: Payload::DelegationKeyToCloud { a, b, tk: *tk },
    };
    (q_msg, tk_msg)
}

/// Cloud-side result computation from the received `tk` and the stored
/// datasets.
pub fn cloud_compute(
    tk: &Key,
    a: PartyId,
    b: PartyId,
    store: &CloudStore,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<Message, ProtocolError> {
    ctr.enter(PartyId::Cloud, Phase::Online);
    let o_a = store.get(a)?;
    let o_b = store.get(b)?;
    o_a.expect_kind(MatrixKind::OAdditive)?;
    o_b.expect_kind(MatrixKind::OAdditive)?;
    o_a.expect_dims(params)?;
    o_b.expect_dims(params)?;
    let chains = mask_chains(tk, params);
    let rows = masked_combination(
        |j, i| o_a.at(j, i),
        |j, i| o_b.at(j, i),
        &chains,
        params,
        ctr,
    );
    Ok(Message {
        from: PartyId::Cloud,
        to: b,
        payload: Payload::CloudResultEo {
            t: BlindedMatrix::new(MatrixKind::T, rows),
        },
    })
}

/// B's retrieval: `g = t - q` pointwise, then interpolate and factorize
/// every bin and keep the valid roots.
pub fn retrieve(
    t: &BlindedMatrix,
    q: &BlindedMatrix,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<BTreeSet<u64>, ProtocolError> {
    ctr.enter(PartyId::ClientB, Phase::Online);
    let g = difference(t, q, params, ctr)?;
    recover_elements(&g, params, ctr)
}

/// Retrieval through the candidate-evaluation route, for cross-checking.
pub fn retrieve_by_candidates(
    t: &BlindedMatrix,
    q: &BlindedMatrix,
    own_set: &[u64],
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<BTreeSet<u64>, ProtocolError> {
    let g = difference(t, q, params, ctr)?;
    recover_elements_by_candidates(&g, own_set, params, ctr)
}

fn difference(
    t: &BlindedMatrix,
    q: &BlindedMatrix,
    params: &PublicParams,
    ctr: &mut OpCounters,
) -> Result<Vec<Vec<FieldElement>>, ProtocolError> {
    t.expect_kind(MatrixKind::T)?;
    q.expect_kind(MatrixKind::Q)?;
    t.expect_dims(params)?;
    q.expect_dims(params)?;
    let (h, n) = (params.table.bins(), params.table.points());
    Ok((0..h)
        .map(|j| (0..n).map(|i| t.at(j, i).sub(q.at(j, i), ctr)).collect())
        .collect())
}

/// Re-derives a client's blinding grid the way the attacks do. Exposed for
/// the adversary module and tests; additive blinding uses the plain PRF.
pub fn reexpand_blinding(owner: PartyId, mk: &Key, params: &PublicParams) -> BlindingMatrix {
    expand_blinding(
        owner,
        mk,
        params.table.bins(),
        params.table.points(),
        false,
        params.field,
    )
}
