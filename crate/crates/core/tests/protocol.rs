//! Flow-level tests for both schemes: blinding identities, frozen operation
//! counts for small table shapes, message schemas, and determinism.

use std::collections::BTreeSet;

use eopsi::bins::{assign_bin, build_table, sample_eval_points, EncodingParams, HashTableParams};
use eopsi::field::{Field, OpCounters, PartyId, Phase};
use eopsi::poly::{random_poly, Polynomial};
use eopsi::prf::{derive_key, expand_blinding, Key, KeyLabel};
use eopsi::protocol::{
    cloud_setup, eo, improved, outsource, run_session, run_session_with_params, wire, CloudStore,
    Message, Payload, ProtocolError, PublicParams, Scheme, SessionConfig, SessionSeeds,
    SetupConfig, HASH_SPEC, PRF_SPEC,
};

fn seeds(tag: u8) -> SessionSeeds {
    SessionSeeds::from_bytes([tag; 16])
}

/// Parameters with a forced table shape, bypassing the overflow sizing.
fn forced_params(h: usize, d: usize) -> PublicParams {
    let field = Field::default_protocol();
    let enc = EncodingParams::default();
    let table = HashTableParams::new(h, d);
    let xs = sample_eval_points(
        table.points(),
        &Key::new([0xEE; 16], KeyLabel::Derived),
        &enc,
        field,
    );
    PublicParams {
        field,
        cardinality: h * d,
        table,
        enc,
        xs,
        hash_spec: HASH_SPEC.to_string(),
        prf_spec: PRF_SPEC.to_string(),
    }
}

/// Greedy set that respects every bin's capacity under the given params.
fn fitting_set(params: &PublicParams, want: usize, start: u64) -> Vec<u64> {
    let mut loads = vec![0usize; params.table.bins()];
    let mut out = Vec::new();
    let mut s = start;
    while out.len() < want {
        let e = params.enc.encode(params.field, s).unwrap();
        let j = assign_bin(e, params.table.bins());
        if loads[j - 1] < params.table.capacity() {
            loads[j - 1] += 1;
            out.push(s);
        }
        s += 1;
    }
    out
}

fn oracle_intersection(a: &[u64], b: &[u64]) -> BTreeSet<u64> {
    let sb: BTreeSet<u64> = b.iter().copied().collect();
    a.iter().copied().filter(|v| sb.contains(v)).collect()
}

fn payload_matrix(msg: &Message) -> &eopsi::protocol::BlindedMatrix {
    match &msg.payload {
        Payload::Outsource { o, .. } => o,
        Payload::DelegationToCloud { q, .. } => q,
        Payload::QToB { q } => q,
        Payload::CloudResultEo { t } => t,
        _ => panic!("message carries no single matrix"),
    }
}

#[test]
fn cloud_setup_examples() {
    let cfg = SetupConfig {
        capacity: 3,
        cardinality: 40,
        ..SetupConfig::default()
    };
    let params = cloud_setup(&cfg, &seeds(1).xs_seed()).unwrap();
    assert_eq!(params.table.points(), 7); // n = 2d + 1
    assert_eq!(params.xs.len(), 7);
    let again = cloud_setup(&cfg, &seeds(1).xs_seed()).unwrap();
    assert_eq!(params, again);

    let no_overflow = SetupConfig {
        cardinality: 10,
        capacity: 10,
        ..SetupConfig::default()
    };
    let p2 = cloud_setup(&no_overflow, &seeds(1).xs_seed()).unwrap();
    assert_eq!(p2.table.bins(), 1);

    let bad_prime = SetupConfig {
        prime: 91,
        ..SetupConfig::default()
    };
    assert!(matches!(
        cloud_setup(&bad_prime, &seeds(1).xs_seed()),
        Err(ProtocolError::Config(_))
    ));
    let bad_c = SetupConfig {
        cardinality: 0,
        ..SetupConfig::default()
    };
    assert!(cloud_setup(&bad_c, &seeds(1).xs_seed()).is_err());
}

#[test]
fn outsource_blinding_identities() {
    let params = forced_params(3, 4);
    let keys = seeds(7).keys();
    let set = fitting_set(&params, 6, 100);
    let mut scratch = OpCounters::scratch();
    let table = build_table(
        &set,
        &params.table,
        &params.enc,
        params.field,
        &keys.pad_a,
        &params.xs,
    )
    .unwrap();

    for scheme in [Scheme::Improved, Scheme::Eo] {
        let mut ctr = OpCounters::new();
        let msg = outsource(
            PartyId::ClientA,
            &set,
            &keys.mk_a,
            &keys.pad_a,
            &params,
            scheme,
            &mut ctr,
        )
        .unwrap();
        let o = payload_matrix(&msg);
        let nonzero = scheme == Scheme::Improved;
        let z = expand_blinding(
            PartyId::ClientA,
            &keys.mk_a,
            params.table.bins(),
            params.table.points(),
            nonzero,
            params.field,
        );
        for j in 1..=params.table.bins() {
            let tau = Polynomial::from_roots(params.field, table.bin(j), &mut scratch);
            for (i, &x) in params.xs.iter().enumerate() {
                let expected = tau.eval(x, &mut scratch);
                let recovered = match scheme {
                    // o * z = tau(x) under multiplicative blinding
                    Scheme::Improved => {
                        assert!(!o.at(j - 1, i).is_zero());
                        o.at(j - 1, i).mul(z.at(j - 1, i), &mut scratch)
                    }
                    // o - z = tau(x) under additive blinding
                    Scheme::Eo => o.at(j - 1, i).sub(z.at(j - 1, i), &mut scratch),
                };
                assert_eq!(recovered, expected, "scheme {:?} bin {j}", scheme);
            }
        }
    }
}

#[test]
fn outsource_rejects_oversized_sets() {
    let params = forced_params(2, 2);
    let keys = seeds(3).keys();
    let set: Vec<u64> = (0..params.cardinality as u64 + 1).collect();
    let mut ctr = OpCounters::new();
    let err = outsource(
        PartyId::ClientA,
        &set,
        &keys.mk_a,
        &keys.pad_a,
        &params,
        Scheme::Improved,
        &mut ctr,
    )
    .unwrap_err();
    assert!(err.to_string().contains("cardinality"), "{err}");
}

#[test]
fn improved_delegate_counts_and_payload_hygiene() {
    // h=2, d=3, n=7: A's online cost is hn(d+1) = 56 muls and hnd = 42 adds.
    let params = forced_params(2, 3);
    let keys = seeds(9).keys();
    let mut ctr = OpCounters::new();
    let msg = improved::delegate(
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.mk_a,
        &keys.tk1,
        &params,
        &mut ctr,
    );
    let t = ctr.tally(PartyId::ClientA, Phase::Online);
    assert_eq!((t.muls, t.adds, t.invs), (56, 42, 0));

    // The serialized delegation must not contain any session key bytes.
    let bytes = wire::encode_message(&msg, &params);
    for key in keys.all() {
        assert!(
            !bytes.windows(16).any(|w| w == key.bytes()),
            "delegation leaked {:?}",
            key
        );
    }

    let mut ctr2 = OpCounters::new();
    let again = improved::delegate(
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.mk_a,
        &keys.tk1,
        &params,
        &mut ctr2,
    );
    assert_eq!(msg, again);
}

#[test]
fn improved_cloud_counts_and_algebra() {
    let params = forced_params(2, 3);
    let keys = seeds(11).keys();
    let set_a = fitting_set(&params, 4, 0);
    let set_b = fitting_set(&params, 4, 50);
    let mut ctr = OpCounters::new();
    let mut store = CloudStore::new();
    for (party, set) in [(PartyId::ClientA, &set_a), (PartyId::ClientB, &set_b)] {
        let msg = outsource(
            party,
            set,
            &keys.master_for(party),
            &keys.pad_for(party),
            &params,
            Scheme::Improved,
            &mut ctr,
        )
        .unwrap();
        store.receive(&msg).unwrap();
    }
    let q_msg = improved::delegate(
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.mk_a,
        &keys.tk1,
        &params,
        &mut ctr,
    );
    let Payload::DelegationToCloud { q, .. } = &q_msg.payload else {
        panic!()
    };

    let mut cloud_ctr = OpCounters::new();
    let result = improved::cloud_compute(
        q,
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.tk2,
        &store,
        &params,
        &mut cloud_ctr,
    )
    .unwrap();
    // h=2, d=3, n=7: hn(d+2) = 70 muls, hnd = 42 adds.
    let t = cloud_ctr.tally(PartyId::Cloud, Phase::Online);
    assert_eq!((t.muls, t.adds), (70, 42));

    // q'[j][i] = omega_A_j(x_i) * tau_A_j(x_i): A's blinding cancels.
    let Payload::CloudResultImproved { q_prime, .. } = &result.payload else {
        panic!()
    };
    let mut scratch = OpCounters::scratch();
    let table_a = build_table(
        &set_a,
        &params.table,
        &params.enc,
        params.field,
        &keys.pad_a,
        &params.xs,
    )
    .unwrap();
    for j in 1..=params.table.bins() {
        let tau = Polynomial::from_roots(params.field, table_a.bin(j), &mut scratch);
        let omega = random_poly(
            &derive_key(&keys.tk1, j as u64),
            params.table.capacity(),
            params.field,
        );
        for (i, &x) in params.xs.iter().enumerate() {
            let expected = omega
                .eval(x, &mut scratch)
                .mul(tau.eval(x, &mut scratch), &mut scratch);
            assert_eq!(q_prime.at(j - 1, i), expected);
        }
    }

    // A missing dataset is named in the error.
    let mut empty_store = CloudStore::new();
    empty_store.insert(PartyId::ClientA, q.clone());
    let err = improved::cloud_compute(
        q,
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.tk2,
        &empty_store,
        &params,
        &mut OpCounters::new(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        ProtocolError::MissingDataset(PartyId::ClientB)
    ));
}

#[test]
fn eo_delegate_counts_and_key_on_wire() {
    // h=2, d=3, n=7: 2hn(d+1) = 112 muls and adds for client A.
    let params = forced_params(2, 3);
    let keys = seeds(13).keys();
    let mut ctr = OpCounters::new();
    let (q_msg, tk_msg) = eo::delegate(
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.mk_a,
        &keys.mk_b,
        &keys.tk,
        &params,
        &mut ctr,
    );
    let t = ctr.tally(PartyId::ClientA, Phase::Online);
    assert_eq!((t.muls, t.adds), (112, 112));

    // tk rides to the cloud in the clear; that is the baseline's flaw.
    let tk_bytes = wire::encode_message(&tk_msg, &params);
    assert!(tk_bytes.windows(16).any(|w| w == keys.tk.bytes()));

    let mut ctr2 = OpCounters::new();
    let again = eo::delegate(
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.mk_a,
        &keys.mk_b,
        &keys.tk,
        &params,
        &mut ctr2,
    );
    assert_eq!((q_msg, tk_msg), again);
}

#[test]
fn eo_cloud_counts_and_difference_identity() {
    let params = forced_params(2, 3);
    let keys = seeds(17).keys();
    let set_a = fitting_set(&params, 5, 0);
    let set_b = fitting_set(&params, 5, 200);
    let mut ctr = OpCounters::new();
    let mut store = CloudStore::new();
    for (party, set) in [(PartyId::ClientA, &set_a), (PartyId::ClientB, &set_b)] {
        let msg = outsource(
            party,
            set,
            &keys.master_for(party),
            &keys.pad_for(party),
            &params,
            Scheme::Eo,
            &mut ctr,
        )
        .unwrap();
        store.receive(&msg).unwrap();
    }
    let (q_msg, tk_msg) = eo::delegate(
        PartyId::ClientA,
        PartyId::ClientB,
        &keys.mk_a,
        &keys.mk_b,
        &keys.tk,
        &params,
        &mut ctr,
    );
    let (Payload::QToB { q }, Payload::DelegationKeyToCloud { tk, .. }) =
        (&q_msg.payload, &tk_msg.payload)
    else {
        panic!()
    };

    let mut cloud_ctr = OpCounters::new();
    let result = eo::cloud_compute(
        tk,
        PartyId::ClientA,
        PartyId::ClientB,
        &store,
        &params,
        &mut cloud_ctr,
    )
    .unwrap();
    let t = cloud_ctr.tally(PartyId::Cloud, Phase::Online);
    assert_eq!((t.muls, t.adds), (112, 112));

    // t - q = omega_A tau_A + omega_B tau_B at every point.
    let Payload::CloudResultEo { t: t_matrix } = &result.payload else {
        panic!()
    };
    let mut scratch = OpCounters::scratch();
    let d = params.table.capacity();
    let k2 = derive_key(&keys.tk, 2);
    let k3 = derive_key(&keys.tk, 3);
    let table_a = build_table(
        &set_a,
        &params.table,
        &params.enc,
        params.field,
        &keys.pad_a,
        &params.xs,
    )
    .unwrap();
    let table_b = build_table(
        &set_b,
        &params.table,
        &params.enc,
        params.field,
        &keys.pad_b,
        &params.xs,
    )
    .unwrap();
    for j in 1..=params.table.bins() {
        let omega_a = random_poly(&derive_key(&k2, j as u64), d, params.field);
        let omega_b = random_poly(&derive_key(&k3, j as u64), d, params.field);
        let tau_a = Polynomial::from_roots(params.field, table_a.bin(j), &mut scratch);
        let tau_b = Polynomial::from_roots(params.field, table_b.bin(j), &mut scratch);
        for (i, &x) in params.xs.iter().enumerate() {
            let expected = omega_a
                .eval(x, &mut scratch)
                .mul(tau_a.eval(x, &mut scratch), &mut scratch)
                .add(
                    omega_b
                        .eval(x, &mut scratch)
                        .mul(tau_b.eval(x, &mut scratch), &mut scratch),
                    &mut scratch,
                );
            let got = t_matrix.at(j - 1, i).sub(q.at(j - 1, i), &mut scratch);
            assert_eq!(got, expected, "bin {j} point {i}");
        }
    }
}

#[test]
fn retrieval_counts_match_the_cost_model() {
    let params = forced_params(2, 3);
    let (h, n) = (2u64, 7u64);
    for scheme in [Scheme::Improved, Scheme::Eo] {
        let set_a = fitting_set(&params, 4, 0);
        let set_b = fitting_set(&params, 4, 2); // overlaps with set_a
        let outcome = run_session_with_params(&params, scheme, &seeds(21), &set_a, &set_b).unwrap();
        let t = outcome.counters.tally(PartyId::ClientB, Phase::Online);
        match scheme {
            Scheme::Improved => {
                assert_eq!((t.adds, t.muls), (h * n, h * n));
            }
            Scheme::Eo => {
                assert_eq!((t.adds, t.muls), (h * n, 0));
            }
        }
        assert_eq!(t.interpolations, h);
        assert_eq!(t.factorizations, h);
        assert_eq!(outcome.intersection, oracle_intersection(&set_a, &set_b));
    }
}

#[test]
fn session_examples_and_cross_scheme_agreement() {
    let cfg = |scheme| SessionConfig {
        scheme,
        setup: SetupConfig {
            cardinality: 10,
            capacity: 10,
            ..SetupConfig::default()
        },
        seeds: seeds(23),
    };
    for scheme in [Scheme::Improved, Scheme::Eo] {
        let outcome = run_session(&cfg(scheme), &[1, 2, 3], &[2, 3, 4]).unwrap();
        assert_eq!(outcome.intersection, [2, 3].into_iter().collect());
        let disjoint = run_session(&cfg(scheme), &[1, 2, 3], &[4, 5, 6]).unwrap();
        assert!(disjoint.intersection.is_empty());
        let equal = run_session(&cfg(scheme), &[7, 8, 9], &[7, 8, 9]).unwrap();
        assert_eq!(equal.intersection, [7, 8, 9].into_iter().collect());
        let empty = run_session(&cfg(scheme), &[], &[2, 3]).unwrap();
        assert!(empty.intersection.is_empty());
    }
}

#[test]
fn transcripts_are_deterministic_and_roundtrip() {
    for scheme in [Scheme::Improved, Scheme::Eo] {
        let cfg = SessionConfig {
            scheme,
            setup: SetupConfig {
                cardinality: 8,
                capacity: 6,
                ..SetupConfig::default()
            },
            seeds: seeds(29),
        };
        let one = run_session(&cfg, &[10, 20, 30], &[20, 40]).unwrap();
        let two = run_session(&cfg, &[10, 20, 30], &[20, 40]).unwrap();
        let bytes_one = wire::encode_transcript(&one.transcript);
        let bytes_two = wire::encode_transcript(&two.transcript);
        assert_eq!(
            bytes_one, bytes_two,
            "same seeds must replay byte-identically"
        );

        let decoded = wire::decode_transcript(&bytes_one).unwrap();
        assert_eq!(decoded, one.transcript);
    }
}

#[test]
fn message_schemas_per_scheme() {
    let cfg = |scheme| SessionConfig {
        scheme,
        setup: SetupConfig {
            cardinality: 6,
            capacity: 5,
            ..SetupConfig::default()
        },
        seeds: seeds(31),
    };
    let improved = run_session(&cfg(Scheme::Improved), &[1, 2], &[2, 3]).unwrap();
    let types: Vec<&str> = improved
        .transcript
        .entries()
        .iter()
        .map(|e| e.message.payload.type_name())
        .collect();
    assert_eq!(
        types,
        [
            "outsource",
            "outsource",
            "start_request",
            "delegation_to_cloud",
            "cloud_result_improved"
        ]
    );

    let eo_run = run_session(&cfg(Scheme::Eo), &[1, 2], &[2, 3]).unwrap();
    let types: Vec<&str> = eo_run
        .transcript
        .entries()
        .iter()
        .map(|e| e.message.payload.type_name())
        .collect();
    assert_eq!(
        types,
        [
            "outsource",
            "outsource",
            "start_request_with_key",
            "q_to_b",
            "delegation_key_to_cloud",
            "cloud_result_eo"
        ]
    );
}

#[test]
fn nondefault_prime_session_and_codec() {
    // A 31-bit Mersenne prime forces the explicit-length element encoding.
    let setup = SetupConfig {
        prime: (1u64 << 31) - 1,
        cardinality: 6,
        capacity: 5,
        enc: EncodingParams {
            element_bits: 16,
            tag_bits: 8,
            tag: 0xA5,
        },
        ..SetupConfig::default()
    };
    for scheme in [Scheme::Improved, Scheme::Eo] {
        let cfg = SessionConfig {
            scheme,
            setup,
            seeds: seeds(37),
        };
        let outcome = run_session(&cfg, &[5, 6, 7], &[6, 7, 8]).unwrap();
        assert_eq!(outcome.intersection, [6, 7].into_iter().collect());
        let bytes = wire::encode_transcript(&outcome.transcript);
        assert_eq!(wire::decode_transcript(&bytes).unwrap(), outcome.transcript);
    }
}

#[test]
fn candidate_route_agrees_with_factorization_route() {
    let params = forced_params(3, 4);
    let keys = seeds(41).keys();
    let set_a = fitting_set(&params, 8, 0);
    let set_b: Vec<u64> = set_a[2..6]
        .iter()
        .copied()
        .chain(fitting_set(&params, 4, 900))
        .collect();
    for scheme in [Scheme::Improved, Scheme::Eo] {
        let outcome = run_session_with_params(&params, scheme, &seeds(41), &set_a, &set_b).unwrap();
        let mut scratch = OpCounters::scratch();
        let via_candidates = match scheme {
            Scheme::Improved => {
                let Payload::CloudResultImproved { q_prime, q_dprime } =
                    &outcome.transcript.entries()[4].message.payload
                else {
                    panic!()
                };
                improved::retrieve_by_candidates(
                    q_prime,
                    q_dprime,
                    &keys.mk_b,
                    &set_b,
                    &params,
                    &mut scratch,
                )
                .unwrap()
            }
            Scheme::Eo => {
                let Payload::QToB { q } = &outcome.transcript.entries()[3].message.payload else {
                    panic!()
                };
                let Payload::CloudResultEo { t } = &outcome.transcript.entries()[5].message.payload
                else {
                    panic!()
                };
                eo::retrieve_by_candidates(t, q, &set_b, &params, &mut scratch).unwrap()
            }
        };
        assert_eq!(via_candidates, outcome.intersection);
        assert_eq!(via_candidates, oracle_intersection(&set_a, &set_b));
    }
}

#[test]
fn retrieval_rejects_mismatched_dimensions() {
    let params = forced_params(2, 3);
    let keys = seeds(43).keys();
    let mut ctr = OpCounters::new();

    // Matrices shaped for a different table.
    let wrong = forced_params(3, 3);
    let set = fitting_set(&wrong, 4, 0);
    let msg = outsource(
        PartyId::ClientA,
        &set,
        &keys.mk_a,
        &keys.pad_a,
        &wrong,
        Scheme::Improved,
        &mut ctr,
    )
    .unwrap();
    let Payload::Outsource { o, .. } = &msg.payload else {
        panic!()
    };
    let q_prime =
        eopsi::protocol::BlindedMatrix::new(eopsi::protocol::MatrixKind::QPrime, o.rows().to_vec());
    let q_dprime = eopsi::protocol::BlindedMatrix::new(
        eopsi::protocol::MatrixKind::QDoublePrime,
        o.rows().to_vec(),
    );
    let err = improved::retrieve(&q_prime, &q_dprime, &keys.mk_b, &params, &mut ctr).unwrap_err();
    assert!(
        matches!(err, ProtocolError::DimensionMismatch { .. }),
        "{err}"
    );

    let t = eopsi::protocol::BlindedMatrix::new(eopsi::protocol::MatrixKind::T, o.rows().to_vec());
    let q = eopsi::protocol::BlindedMatrix::new(eopsi::protocol::MatrixKind::Q, o.rows().to_vec());
    let err = eo::retrieve(&t, &q, &params, &mut ctr).unwrap_err();
    assert!(
        matches!(err, ProtocolError::DimensionMismatch { .. }),
        "{err}"
    );
}

#[test]
fn cloud_store_rejects_non_outsource_messages() {
    let mut store = CloudStore::new();
    let msg = Message {
        from: PartyId::ClientB,
        to: PartyId::ClientA,
        payload: Payload::StartRequest {
            b: PartyId::ClientB,
        },
    };
    assert!(matches!(
        store.receive(&msg),
        Err(ProtocolError::UnexpectedMessage(_))
    ));
}

#[test]
fn step_errors_name_the_step() {
    let cfg = SessionConfig {
        scheme: Scheme::Improved,
        setup: SetupConfig {
            cardinality: 2,
            capacity: 2,
            ..SetupConfig::default()
        },
        seeds: seeds(47),
    };
    let err = run_session(&cfg, &[1, 2, 3], &[1]).unwrap_err();
    assert!(err.to_string().contains("outsource"), "{err}");
}
