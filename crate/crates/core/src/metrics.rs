//! Closed-form operation counts, measured-vs-expected comparison, and the
//! scaling benchmark.
//!
//! The cost model counts online-phase modular additions and
//! multiplications per party, plus interpolation/factorization as unit
//! events, with n = 2d + 1 throughout:
//!
//! | scheme   | party  | adds       | muls       | interp+factor |
//! |----------|--------|------------|------------|---------------|
//! | eo       | A      | 2hn(d+1)   | 2hn(d+1)   | -             |
//! | eo       | cloud  | 2hn(d+1)   | 2hn(d+1)   | -             |
//! | eo       | B      | hn         | -          | h             |
//! | improved | A      | hnd        | hn(d+1)    | -             |
//! | improved | cloud  | hnd        | hn(d+2)    | -             |
//! | improved | B      | hn         | hn         | h             |
//!
//! The comparison demands exact equality, which is the sharpest check that
//! the implementation performs the protocols' arithmetic step for step.
//! PRF invocations are free by convention, and the field operations inside
//! interpolation/factorization are tallied separately (`inner_*`) so they
//! never pollute the headline rows.

use std::time::Instant;

use serde_json::json;

use crate::field::{OpCounters, PartyId, Phase};
use crate::protocol::{
    cloud_setup, run_session_with_params, ProtocolError, Scheme, SessionSeeds, SetupConfig,
};

/// One party's expected online-phase counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartyCounts {
    pub adds: u64,
    pub muls: u64,
    /// Expected value for both the interpolation and the factorization
    /// counters; the two always move in lockstep (one of each per bin).
    pub interp_factor: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedCounts {
    pub scheme: Scheme,
    pub h: u64,
    pub d: u64,
    pub n: u64,
    pub client_a: PartyCounts,
    pub cloud: PartyCounts,
    pub client_b: PartyCounts,
}

impl ExpectedCounts {
    pub fn for_party(&self, party: PartyId) -> PartyCounts {
        match party {
            PartyId::ClientA => self.client_a,
            PartyId::ClientB => self.client_b,
            PartyId::Cloud => self.cloud,
        }
    }

    pub fn total_muls(&self) -> u64 {
        self.client_a.muls + self.cloud.muls + self.client_b.muls
    }

    /// Online multiplication load of the busier client.
    pub fn max_client_muls(&self) -> u64 {
        self.client_a.muls.max(self.client_b.muls)
    }

    /// Gap between the busier and the idler client.
    pub fn client_muls_spread(&self) -> u64 {
        self.max_client_muls() - self.client_a.muls.min(self.client_b.muls)
    }
}

/// The closed forms of the table above.
pub fn expected_counts(scheme: Scheme, h: u64, d: u64) -> ExpectedCounts {
    assert!(h >= 1 && d >= 1);
    let n = 2 * d + 1;
    let hn = h * n;
    let (client_a, cloud, client_b) = match scheme {
        Scheme::Eo => {
            let both = PartyCounts {
                adds: 2 * hn * (d + 1),
                muls: 2 * hn * (d + 1),
                interp_factor: 0,
            };
            (
                both,
                both,
                PartyCounts {
                    adds: hn,
                    muls: 0,
                    interp_factor: h,
                },
            )
        }
        Scheme::Improved => (
            PartyCounts {
                adds: hn * d,
                muls: hn * (d + 1),
                interp_factor: 0,
            },
            PartyCounts {
                adds: hn * d,
                muls: hn * (d + 2),
                interp_factor: 0,
            },
            PartyCounts {
                adds: hn,
                muls: hn,
                interp_factor: h,
            },
        ),
    };
    ExpectedCounts {
        scheme,
        h,
        d,
        n,
        client_a,
        cloud,
        client_b,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMismatch {
    pub party: PartyId,
    pub op: &'static str,
    pub measured: u64,
    pub expected: u64,
}

/// Per-cell verdict of measured online counters against the closed forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountComparison {
    pub mismatches: Vec<CountMismatch>,
}

impl CountComparison {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares only the online phase; setup and outsourcing never enter the
/// table. Interpolations and factorizations are both held to the
/// `interp_factor` column.
pub fn compare_counts(measured: &OpCounters, expected: &ExpectedCounts) -> CountComparison {
    let mut mismatches = Vec::new();
    for party in PartyId::ALL {
        let t = measured.tally(party, Phase::Online);
        let want = expected.for_party(party);
        for (op, measured_v, expected_v) in [
            ("adds", t.adds, want.adds),
            ("muls", t.muls, want.muls),
            ("interpolations", t.interpolations, want.interp_factor),
            ("factorizations", t.factorizations, want.interp_factor),
        ] {
            if measured_v != expected_v {
                mismatches.push(CountMismatch {
                    party,
                    op,
                    measured: measured_v,
                    expected: expected_v,
                });
            }
        }
    }
    CountComparison { mismatches }
}

/// One benchmark row: one (scheme, c, party, phase) cell.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub c: usize,
    pub h: usize,
    pub d: usize,
    pub n: usize,
    pub party: PartyId,
    pub phase: Phase,
    pub adds: u64,
    pub muls: u64,
    pub invs: u64,
    pub interp_factor: u64,
    pub msg_bytes: usize,
    pub ms: f64,
}

pub const CSV_HEADER: &str = "scheme,c,h,d,n,party,phase,adds,muls,invs,interp_factor,msg_bytes,ms";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}\n",
            r.scheme.name(),
            r.c,
            r.h,
            r.d,
            r.n,
            r.party.short(),
            r.phase.name(),
            r.adds,
            r.muls,
            r.invs,
            r.interp_factor,
            r.msg_bytes,
            r.ms
        ));
    }
    out
}

/// Sweeps set cardinalities at fixed bin capacity: for each c the table is
/// sized by [`suggest_bin_count`](crate::bins::suggest_bin_count),
/// `trials` seeded sessions run with
/// random size-c sets, and one row per (party, phase) is emitted. Counts
/// are identical across trials (they depend only on the table shape);
/// wall-clock times are averaged.
pub fn bench_sweep(
    c_values: &[usize],
    d: usize,
    scheme: Scheme,
    trials: usize,
    fail_prob: f64,
    base_seed: [u8; 16],
) -> Result<Vec<BenchRow>, ProtocolError> {
    assert!(trials >= 1);
    let mut rows = Vec::new();
    for (ci, &c) in c_values.iter().enumerate() {
        let setup = SetupConfig {
            cardinality: c,
            capacity: d,
            fail_prob,
            ..SetupConfig::default()
        };
        let mut acc: Option<Vec<BenchRow>> = None;
        for trial in 0..trials {
            let mut seed = base_seed;
            seed[0] ^= ci as u8;
            seed[1] ^= trial as u8;
            seed[2] ^= match scheme {
                Scheme::Eo => 0x10,
                Scheme::Improved => 0x20,
            };
            let seeds = SessionSeeds::from_bytes(seed);
            let params = cloud_setup(&setup, &seeds.xs_seed())?;
            let set_seed = seeds.keys().pad_a; // any deterministic subkey works
            let set_a =
                crate::protocol::session::seeded_set(&set_seed, c, params.enc.element_bits, 1);
            let set_b =
                crate::protocol::session::seeded_set(&set_seed, c, params.enc.element_bits, 2);
            let started = Instant::now();
            let outcome = run_session_with_params(&params, scheme, &seeds, &set_a, &set_b)?;
            let _session_wall = started.elapsed();
            let mut trial_rows = Vec::with_capacity(9);
            for party in PartyId::ALL {
                for phase in Phase::ALL {
                    let t = outcome.counters.tally(party, phase);
                    debug_assert_eq!(t.interpolations, t.factorizations);
                    trial_rows.push(BenchRow {
                        scheme,
                        c,
                        h: params.table.bins(),
                        d,
                        n: params.table.points(),
                        party,
                        phase,
                        adds: t.adds,
                        muls: t.muls,
                        invs: t.invs,
                        interp_factor: t.interpolations,
                        msg_bytes: outcome.sent_bytes(party, phase),
                        ms: outcome.elapsed(party, phase).as_secs_f64() * 1e3,
                    });
                }
            }
            match &mut acc {
                None => acc = Some(trial_rows),
                Some(acc_rows) => {
                    for (a, b) in acc_rows.iter_mut().zip(&trial_rows) {
                        debug_assert_eq!((a.adds, a.muls), (b.adds, b.muls));
                        a.ms += b.ms;
                    }
                }
            }
        }
        let mut c_rows = acc.expect("at least one trial ran");
        for r in &mut c_rows {
            r.ms /= trials as f64;
        }
        rows.extend(c_rows);
    }
    // Deterministic order: scheme runs are separate, so (c, party, phase).
    rows.sort_by_key(|r| (r.scheme, r.c, r.party, r.phase));
    Ok(rows)
}

/// Coefficient of determination of the least-squares line through
/// (x, y) pairs.
pub fn linear_r2(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    (sxy * sxy) / (sxx * syy)
}

/// Counters as JSON, one object per (party, phase) with any activity.
pub fn counters_to_json(ctr: &OpCounters) -> serde_json::Value {
    let mut slots = Vec::new();
    for party in PartyId::ALL {
        for phase in Phase::ALL {
            let t = ctr.tally(party, phase);
            if t.is_empty() {
                continue;
            }
            slots.push(json!({
                "party": party.short().to_string(),
                "phase": phase.name(),
                "adds": t.adds,
                "muls": t.muls,
                "invs": t.invs,
                "interpolations": t.interpolations,
                "factorizations": t.factorizations,
                "inner_adds": t.inner_adds,
                "inner_muls": t.inner_muls,
                "inner_invs": t.inner_invs,
            }));
        }
    }
    json!(slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;

    #[test]
    fn closed_form_examples() {
        // h=2, d=3, n=7.
        let imp = expected_counts(Scheme::Improved, 2, 3);
        assert_eq!(imp.client_a.muls, 56);
        assert_eq!(imp.client_a.adds, 42);
        assert_eq!(imp.cloud.muls, 70);
        assert_eq!(imp.client_b.muls, 14);
        assert_eq!(imp.client_b.interp_factor, 2);
        let eo = expected_counts(Scheme::Eo, 2, 3);
        assert_eq!(eo.client_a.muls, 112);
        assert_eq!(eo.cloud.adds, 112);
        assert_eq!(eo.client_b.adds, 14);
        assert_eq!(eo.client_b.muls, 0);
    }

    #[test]
    fn improvement_holds_across_the_grid() {
        for h in 1..=8 {
            for d in 1..=12 {
                let imp = expected_counts(Scheme::Improved, h, d);
                let eo = expected_counts(Scheme::Eo, h, d);
                assert!(imp.total_muls() < eo.total_muls(), "h={h} d={d}");
                assert!(imp.max_client_muls() < eo.max_client_muls(), "h={h} d={d}");
                assert!(
                    imp.client_muls_spread() < eo.client_muls_spread(),
                    "h={h} d={d}"
                );
            }
        }
    }

    #[test]
    fn fault_injection_is_flagged_once() {
        let expected = expected_counts(Scheme::Improved, 2, 3);
        let mut measured = OpCounters::new();
        // Forge an exactly-conforming counter set...
        let f = Field::default_protocol();
        for party in PartyId::ALL {
            measured.enter(party, Phase::Online);
            let want = expected.for_party(party);
            for _ in 0..want.adds {
                let _ = f.elem(1).add(f.elem(2), &mut measured);
            }
            for _ in 0..want.muls {
                let _ = f.elem(2).mul(f.elem(3), &mut measured);
            }
        }
        // ...except the unit events, which we inject directly through a
        // retrieval-shaped run below instead. Here just check adds/muls.
        let partial = compare_counts(&measured, &expected);
        assert!(partial
            .mismatches
            .iter()
            .all(|m| m.op == "interpolations" || m.op == "factorizations"));

        // One extra addition must produce exactly one new mismatch.
        measured.enter(PartyId::Cloud, Phase::Online);
        let _ = f.elem(1).add(f.elem(1), &mut measured);
        let faulty = compare_counts(&measured, &expected);
        assert_eq!(faulty.mismatches.len(), partial.mismatches.len() + 1);
        let extra: Vec<_> = faulty
            .mismatches
            .iter()
            .filter(|m| m.op == "adds")
            .collect();
        assert_eq!(extra.len(), 1);
        assert_eq!(extra[0].party, PartyId::Cloud);
        assert_eq!(extra[0].measured, extra[0].expected + 1);
    }

    #[test]
    fn outsource_phase_never_enters_the_comparison() {
        let expected = expected_counts(Scheme::Eo, 1, 1);
        let f = Field::default_protocol();
        let mut measured = OpCounters::new();
        // Heavy outsource-phase noise.
        measured.enter(PartyId::ClientA, Phase::Outsource);
        for _ in 0..1000 {
            let _ = f.elem(5).mul(f.elem(7), &mut measured);
        }
        // Conforming online phase.
        for party in PartyId::ALL {
            measured.enter(party, Phase::Online);
            let want = expected.for_party(party);
            for _ in 0..want.adds {
                let _ = f.elem(1).add(f.elem(2), &mut measured);
            }
            for _ in 0..want.muls {
                let _ = f.elem(2).mul(f.elem(3), &mut measured);
            }
        }
        let cmp = compare_counts(&measured, &expected);
        assert!(cmp
            .mismatches
            .iter()
            .all(|m| m.op == "interpolations" || m.op == "factorizations"));
    }

    #[test]
    fn r2_of_a_line_is_one() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        assert!((linear_r2(&xs, &ys) - 1.0).abs() < 1e-12);
        let noisy = [3.1, 4.9, 7.2, 8.8];
        assert!(linear_r2(&xs, &noisy) > 0.99);
        let flat = [2.0, -1.0, 2.0, -1.0];
        assert!(linear_r2(&xs, &flat) < 0.5);
    }

    #[test]
    fn csv_shape() {
        let rows = bench_sweep(
            &[8],
            8,
            Scheme::Improved,
            1,
            crate::bins::DEFAULT_FAIL_PROB,
            [9u8; 16],
        )
        .unwrap();
        assert_eq!(rows.len(), 9); // 3 parties x 3 phases
        let csv = rows_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(csv.lines().count(), 10);
        // B's online row carries h interpolation+factorization events.
        let b_online = rows
            .iter()
            .find(|r| r.party == PartyId::ClientB && r.phase == Phase::Online)
            .unwrap();
        assert_eq!(b_online.interp_factor as usize, b_online.h);
    }
}
