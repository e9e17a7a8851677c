//! End-to-end session driver.
//!
//! Runs setup, outsourcing, delegation, cloud computation and retrieval in
//! order, pushing every message through the transcript: each one is
//! serialized, recorded, re-parsed, and only the re-parsed copy is handed
//! to its recipient. A session is a pure function of the seed bytes and the
//! two input sets.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use crate::field::{OpCounters, PartyId, Phase};
use crate::prf::Key;

use super::message::{Message, Payload, Transcript};
use super::{
    cloud_setup, eo, improved, outsource, CloudStore, ProtocolError, PublicParams, Scheme,
    SessionKeys, SessionSeeds, SetupConfig,
};

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub scheme: Scheme,
    pub setup: SetupConfig,
    pub seeds: SessionSeeds,
}

/// Wall-clock and traffic bookkeeping for one protocol step.
#[derive(Debug, Clone, Copy)]
pub struct StepStat {
    pub party: PartyId,
    pub phase: Phase,
    pub sent_bytes: usize,
    pub elapsed: Duration,
}

#[derive(Debug)]
pub struct SessionOutcome {
    pub scheme: Scheme,
    pub params: PublicParams,
    pub intersection: BTreeSet<u64>,
    pub transcript: Transcript,
    pub counters: OpCounters,
    pub keys: SessionKeys,
    pub steps: Vec<StepStat>,
}

impl SessionOutcome {
    pub fn sent_bytes(&self, party: PartyId, phase: Phase) -> usize {
        self.steps
            .iter()
            .filter(|s| s.party == party && s.phase == phase)
            .map(|s| s.sent_bytes)
            .sum()
    }

    pub fn elapsed(&self, party: PartyId, phase: Phase) -> Duration {
        self.steps
            .iter()
            .filter(|s| s.party == party && s.phase == phase)
            .map(|s| s.elapsed)
            .sum()
    }

    pub fn total_message_bytes(&self) -> usize {
        self.transcript
            .entries()
            .iter()
            .map(|e| e.bytes.len())
            .sum()
    }
}

/// Cloud setup followed by the full flow.
pub fn run_session(
    cfg: &SessionConfig,
    set_a: &[u64],
    set_b: &[u64],
) -> Result<SessionOutcome, ProtocolError> {
    let params = cloud_setup(&cfg.setup, &cfg.seeds.xs_seed()).map_err(|e| e.in_step("setup"))?;
    run_session_with_params(&params, cfg.scheme, &cfg.seeds, set_a, set_b)
}

/// The full flow against already-published parameters.
pub fn run_session_with_params(
    params: &PublicParams,
    scheme: Scheme,
    seeds: &SessionSeeds,
    set_a: &[u64],
    set_b: &[u64],
) -> Result<SessionOutcome, ProtocolError> {
    let keys = seeds.keys();
    let mut ctr = OpCounters::new();
    let mut transcript = Transcript::new(scheme, params.clone());
    let mut store = CloudStore::new();
    let mut steps: Vec<StepStat> = Vec::new();

    let mut record = |transcript: &mut Transcript,
                      steps: &mut Vec<StepStat>,
                      msg: Message,
                      phase: Phase,
                      started: Instant,
                      step: &'static str|
     -> Result<Message, ProtocolError> {
        let party = msg.from;
        let delivered = transcript.record(msg).map_err(|e| e.in_step(step))?;
        let bytes = transcript
            .entries()
            .last()
            .expect("just recorded")
            .bytes
            .len();
        steps.push(StepStat {
            party,
            phase,
            sent_bytes: bytes,
            elapsed: started.elapsed(),
        });
        Ok(delivered)
    };

    // Outsourcing, A then B.
    for (party, set) in [(PartyId::ClientA, set_a), (PartyId::ClientB, set_b)] {
        let started = Instant::now();
        let msg = outsource(
            party,
            set,
            &keys.master_for(party),
            &keys.pad_for(party),
            params,
            scheme,
            &mut ctr,
        )
        .map_err(|e| e.in_step("outsource"))?;
        let delivered = record(
            &mut transcript,
            &mut steps,
            msg,
            Phase::Outsource,
            started,
            "outsource",
        )?;
        store
            .receive(&delivered)
            .map_err(|e| e.in_step("outsource"))?;
    }

    let intersection = match scheme {
        Scheme::Improved => run_improved(
            params,
            &keys,
            &mut ctr,
            &mut transcript,
            &store,
            &mut steps,
            &mut record,
        )?,
        Scheme::Eo => run_eo(
            params,
            &keys,
            &mut ctr,
            &mut transcript,
            &store,
            &mut steps,
            &mut record,
        )?,
    };

    Ok(SessionOutcome {
        scheme,
        params: params.clone(),
        intersection,
        transcript,
        counters: ctr,
        keys,
        steps,
    })
}

type Recorder = dyn FnMut(
    &mut Transcript,
    &mut Vec<StepStat>,
    Message,
    Phase,
    Instant,
    &'static str,
) -> Result<Message, ProtocolError>;

fn run_improved(
    params: &PublicParams,
    keys: &SessionKeys,
    ctr: &mut OpCounters,
    transcript: &mut Transcript,
    store: &CloudStore,
    steps: &mut Vec<StepStat>,
    record: &mut Recorder,
) -> Result<BTreeSet<u64>, ProtocolError> {
    let (a, b) = (PartyId::ClientA, PartyId::ClientB);

    // B asks to start, sending only its id.
    let started = Instant::now();
    let start = Message {
        from: b,
        to: a,
        payload: Payload::StartRequest { b },
    };
    let delivered = record(transcript, steps, start, Phase::Online, started, "start")?;
    let Payload::StartRequest { b: b_id } = delivered.payload else {
        return Err(ProtocolError::UnexpectedMessage("expected a start request"));
    };

    // A delegates to the cloud.
    let started = Instant::now();
    let q_msg = improved::delegate(a, b_id, &keys.mk_a, &keys.tk1, params, ctr);
    let delivered = record(transcript, steps, q_msg, Phase::Online, started, "delegate")?;
    let Payload::DelegationToCloud {
        a: a_id,
        b: b_id,
        q,
    } = delivered.payload
    else {
        return Err(ProtocolError::UnexpectedMessage("expected a delegation"));
    };

    // Cloud computes and pushes the result to B.
    let started = Instant::now();
    let result = improved::cloud_compute(&q, a_id, b_id, &keys.tk2, store, params, ctr)
        .map_err(|e| e.in_step("cloud"))?;
    let delivered = record(transcript, steps, result, Phase::Online, started, "cloud")?;
    let Payload::CloudResultImproved { q_prime, q_dprime } = delivered.payload else {
        return Err(ProtocolError::UnexpectedMessage(
            "expected an improved result",
        ));
    };

    // B retrieves locally.
    let started = Instant::now();
    let intersection = improved::retrieve(&q_prime, &q_dprime, &keys.mk_b, params, ctr)
        .map_err(|e| e.in_step("retrieve"))?;
    steps.push(StepStat {
        party: PartyId::ClientB,
        phase: Phase::Online,
        sent_bytes: 0,
        elapsed: started.elapsed(),
    });
    Ok(intersection)
}

fn run_eo(
    params: &PublicParams,
    keys: &SessionKeys,
    ctr: &mut OpCounters,
    transcript: &mut Transcript,
    store: &CloudStore,
    steps: &mut Vec<StepStat>,
    record: &mut Recorder,
) -> Result<BTreeSet<u64>, ProtocolError> {
    let (a, b) = (PartyId::ClientA, PartyId::ClientB);

    // B opens by sending its id and master key to A.
    let started = Instant::now();
    let start = Message {
        from: b,
        to: a,
        payload: Payload::StartRequestWithKey { b, mk_b: keys.mk_b },
    };
    let delivered = record(transcript, steps, start, Phase::Online, started, "start")?;
    let Payload::StartRequestWithKey { b: b_id, mk_b } = delivered.payload else {
        return Err(ProtocolError::UnexpectedMessage(
            "expected a keyed start request",
        ));
    };

    // A delegates: q to B, tk to the cloud.
    let started = Instant::now();
    let (q_msg, tk_msg) = eo::delegate(a, b_id, &keys.mk_a, &mk_b, &keys.tk, params, ctr);
    let q_delivered = record(transcript, steps, q_msg, Phase::Online, started, "delegate")?;
    let started = Instant::now();
    let tk_delivered = record(
        transcript,
        steps,
        tk_msg,
        Phase::Online,
        started,
        "delegate",
    )?;
    let Payload::QToB { q } = q_delivered.payload else {
        return Err(ProtocolError::UnexpectedMessage("expected q for B"));
    };
    let Payload::DelegationKeyToCloud {
        a: a_id,
        b: b_id,
        tk,
    } = tk_delivered.payload
    else {
        return Err(ProtocolError::UnexpectedMessage(
            "expected a delegation key",
        ));
    };

    // Cloud computes t from tk and the stored datasets.
    let started = Instant::now();
    let result =
        eo::cloud_compute(&tk, a_id, b_id, store, params, ctr).map_err(|e| e.in_step("cloud"))?;
    let delivered = record(transcript, steps, result, Phase::Online, started, "cloud")?;
    let Payload::CloudResultEo { t } = delivered.payload else {
        return Err(ProtocolError::UnexpectedMessage(
            "expected a baseline result",
        ));
    };

    // B subtracts and factorizes.
    let started = Instant::now();
    let intersection = eo::retrieve(&t, &q, params, ctr).map_err(|e| e.in_step("retrieve"))?;
    steps.push(StepStat {
        party: PartyId::ClientB,
        phase: Phase::Online,
        sent_bytes: 0,
        elapsed: started.elapsed(),
    });
    Ok(intersection)
}

/// Deterministic sets for harnesses and benchmarks: `count` distinct
/// elements of the encoding universe drawn from a PRF stream.
pub fn seeded_set(seed: &Key, count: usize, universe_bits: u32, salt: u64) -> Vec<u64> {
    let field = crate::field::Field::default_protocol();
    let mask = if universe_bits >= 64 {
        u64::MAX
    } else {
        (1u64 << universe_bits) - 1
    };
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut draw = salt.wrapping_mul(1 << 32);
    while out.len() < count {
        let v = crate::prf::prf_field(seed, draw, field).value() & mask;
        draw += 1;
        if seen.insert(v) {
            out.push(v);
        }
    }
    out
}
