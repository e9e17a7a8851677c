//! `eopsi`: delegated private set intersection from the command line.
//!
//! * `run` executes a whole session in-process and prints the intersection.
//! * `setup` / `outsource` / `delegate` / `cloud` / `retrieve` replay the
//!   five protocol steps through files in a store directory, one process
//!   per step; with the same seed the pipeline reproduces `run` exactly.
//! * `attack` replays the passive-eavesdropper attacks against a recorded
//!   transcript and emits one JSON report per line.
//! * `bench` sweeps set cardinalities, writes a CSV of per-party counters,
//!   and checks the measurements against the closed-form cost model.
//!
//! Exit codes: 0 success, 2 usage, 3 protocol failure, 4 I/O or parse
//! failure.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eopsi::adversary::{self, EavesdropperView, ALL_CHANNELS};
use eopsi::bins::{parse_set_text, BinsError, EncodingParams};
use eopsi::field::{OpCounters, PartyId, Phase};
use eopsi::metrics::{self, bench_sweep, expected_counts};
use eopsi::prf::Key;
use eopsi::protocol::{
    cloud_setup, eo, improved, outsource, run_session, wire, CloudStore, Message, Payload,
    ProtocolError, PublicParams, Scheme, SessionConfig, SessionKeys, SessionSeeds, SetupConfig,
};

const STORE_PARAMS: &str = "params.bin";
const STORE_DELEGATE: &str = "delegate.bin";
const STORE_DELEGATE_Q: &str = "delegate_q.bin";
const STORE_DELEGATE_TK: &str = "delegate_tk.bin";
const STORE_RESULT: &str = "result.bin";

#[derive(Parser)]
#[command(
    name = "eopsi",
    version,
    about = "Delegated private set intersection: baseline and improved schemes, attack replay, and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full session and print the intersection, one element per line
    Run(RunArgs),
    /// Replay eavesdropper attacks against a recorded transcript
    Attack(AttackArgs),
    /// Sweep set cardinalities and compare counters with the cost model
    Bench(BenchArgs),
    /// Publish public parameters into the store directory
    Setup(SetupArgs),
    /// Blind one party's set and upload it to the cloud store
    Outsource(OutsourceArgs),
    /// Client A's delegation step
    Delegate(StepArgs),
    /// Cloud-side result computation
    Cloud(StepArgs),
    /// Client B's result retrieval
    Retrieve(RetrieveArgs),
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Field modulus (decimal); must be prime
    #[arg(long, default_value_t = eopsi::field::MERSENNE61)]
    prime: u64,
    /// Set cardinality upper bound c
    #[arg(long, default_value_t = 50)]
    cardinality: usize,
    /// Maximum bin size d
    #[arg(long, default_value_t = 10)]
    bin_capacity: usize,
    /// Budget for the probability that any bin overflows
    #[arg(long, default_value_t = eopsi::bins::DEFAULT_FAIL_PROB)]
    fail_prob: f64,
}

impl ParamArgs {
    fn setup_config(&self) -> SetupConfig {
        SetupConfig {
            prime: self.prime,
            cardinality: self.cardinality,
            capacity: self.bin_capacity,
            fail_prob: self.fail_prob,
            enc: EncodingParams::default(),
        }
    }
}

#[derive(Args, Clone)]
struct SchemeArg {
    /// Which scheme to run
    #[arg(long, value_parser = parse_scheme, default_value = "improved")]
    scheme: Scheme,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| format!("unknown scheme {s:?}, expected eo or improved"))
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    scheme: SchemeArg,
    /// Session seed, 32 hex chars; drawn from system entropy when omitted
    #[arg(long)]
    seed: Option<String>,
    /// Client A's set file
    #[arg(long)]
    set_a: PathBuf,
    /// Client B's set file
    #[arg(long)]
    set_b: PathBuf,
    /// Also write the intersection here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record the session transcript here
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Write a JSON mirror of the transcript here
    #[arg(long)]
    transcript_json: Option<PathBuf>,
    /// Write per-party counters as JSON here
    #[arg(long)]
    counters: Option<PathBuf>,
    /// Print session keys to stderr
    #[arg(long)]
    dump_secrets: bool,
}

#[derive(Args)]
struct AttackArgs {
    /// Recorded transcript to replay against
    #[arg(long)]
    transcript: PathBuf,
    /// Channels the eavesdropper observes, e.g. "B-A,A-C" (default: all)
    #[arg(long)]
    channels: Option<String>,
    /// Session seed; adds the seed-derived keys to the key-material scan
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated set cardinalities
    #[arg(long, default_value = "64,128,256,512,1024")]
    c_list: String,
    /// Maximum bin size d
    #[arg(long, default_value_t = 10)]
    bin_capacity: usize,
    /// Sessions per cardinality
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Budget for the probability that any bin overflows
    #[arg(long, default_value_t = eopsi::bins::DEFAULT_FAIL_PROB)]
    fail_prob: f64,
    /// CSV output path
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    /// Benchmark seed, 32 hex chars
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct SetupArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Store directory for the step pipeline
    #[arg(long)]
    store_dir: PathBuf,
    /// Session seed, 32 hex chars
    #[arg(long)]
    seed: String,
}

#[derive(Args)]
struct OutsourceArgs {
    #[command(flatten)]
    scheme: SchemeArg,
    #[arg(long)]
    store_dir: PathBuf,
    #[arg(long)]
    seed: String,
    /// Which client outsources: A or B
    #[arg(long, value_parser = parse_party)]
    party: PartyId,
    /// The party's set file
    #[arg(long)]
    set_file: PathBuf,
    #[arg(long)]
    dump_secrets: bool,
}

fn parse_party(s: &str) -> Result<PartyId, String> {
    match s {
        "A" | "a" => Ok(PartyId::ClientA),
        "B" | "b" => Ok(PartyId::ClientB),
        _ => Err(format!("unknown party {s:?}, expected A or B")),
    }
}

#[derive(Args)]
struct StepArgs {
    #[command(flatten)]
    scheme: SchemeArg,
    #[arg(long)]
    store_dir: PathBuf,
    #[arg(long)]
    seed: String,
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    scheme: SchemeArg,
    #[arg(long)]
    store_dir: PathBuf,
    #[arg(long)]
    seed: String,
    /// Client B's set file (used only for sanity reporting)
    #[arg(long)]
    set_file: Option<PathBuf>,
    /// Also write the intersection here
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors that should exit with the usage code.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
        if cause.downcast_ref::<wire::WireError>().is_some() {
            return 4;
        }
        if let Some(b) = cause.downcast_ref::<BinsError>() {
            return match b {
                BinsError::SetFile { .. } => 4,
                _ => 3,
            };
        }
        if let Some(p) = cause.downcast_ref::<ProtocolError>() {
            return match p {
                ProtocolError::Wire(_) => 4,
                _ => 3,
            };
        }
    }
    2
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Setup(args) => cmd_setup(args),
        Command::Outsource(args) => cmd_outsource(args),
        Command::Delegate(args) => cmd_delegate(args),
        Command::Cloud(args) => cmd_cloud(args),
        Command::Retrieve(args) => cmd_retrieve(args),
    }
}

fn parse_seed(hex_seed: &str) -> Result<SessionSeeds> {
    let raw = hex::decode(hex_seed)
        .map_err(|e| UsageError(format!("seed must be hex: {e}")))
        .map_err(anyhow::Error::new)?;
    let bytes: [u8; 16] = raw.try_into().map_err(|_| {
        anyhow!(UsageError(
            "seed must be exactly 16 bytes (32 hex chars)".into()
        ))
    })?;
    Ok(SessionSeeds::from_bytes(bytes))
}

/// Explicit seed, or fresh entropy printed so the run can be replayed.
fn seed_or_entropy(seed: &Option<String>) -> Result<SessionSeeds> {
    match seed {
        Some(s) => parse_seed(s),
        None => {
            let bytes: [u8; 16] = rand::random();
            eprintln!("seed: {}", hex::encode(bytes));
            Ok(SessionSeeds::from_bytes(bytes))
        }
    }
}

fn read_set_file(path: &Path) -> Result<Vec<u64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading set file {}", path.display()))?;
    let set = parse_set_text(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(set)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_bytes(path: &Path, role: &str) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading the {role} file {}", path.display()))
}

fn print_intersection(intersection: &BTreeSet<u64>, out: &Option<PathBuf>) -> Result<()> {
    let mut text = String::new();
    for v in intersection {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    print!("{text}");
    if let Some(path) = out {
        write_bytes(path, text.as_bytes())?;
    }
    Ok(())
}

fn dump_secrets(keys: &SessionKeys) {
    eprintln!(
        "secrets: mk_A={} mk_B={} pad_A={} pad_B={} tk={} tk1={} tk2={}",
        keys.mk_a.hex(),
        keys.mk_b.hex(),
        keys.pad_a.hex(),
        keys.pad_b.hex(),
        keys.tk.hex(),
        keys.tk1.hex(),
        keys.tk2.hex()
    );
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let seeds = seed_or_entropy(&args.seed)?;
    let set_a = read_set_file(&args.set_a)?;
    let set_b = read_set_file(&args.set_b)?;
    let cfg = SessionConfig {
        scheme: args.scheme.scheme,
        setup: args.params.setup_config(),
        seeds,
    };
    let outcome = run_session(&cfg, &set_a, &set_b)?;
    if args.dump_secrets {
        dump_secrets(&outcome.keys);
    }
    eprintln!(
        "{}: h={} n={} messages={} bytes={} |intersection|={}",
        outcome.scheme.name(),
        outcome.params.table.bins(),
        outcome.params.table.points(),
        outcome.transcript.len(),
        outcome.total_message_bytes(),
        outcome.intersection.len()
    );
    if let Some(path) = &args.transcript {
        write_bytes(path, &wire::encode_transcript(&outcome.transcript))?;
    }
    if let Some(path) = &args.transcript_json {
        write_bytes(path, outcome.transcript.to_json().to_string().as_bytes())?;
    }
    if let Some(path) = &args.counters {
        write_bytes(
            path,
            metrics::counters_to_json(&outcome.counters)
                .to_string()
                .as_bytes(),
        )?;
    }
    print_intersection(&outcome.intersection, &args.out)
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let bytes = read_bytes(&args.transcript, "transcript")?;
    let transcript = wire::decode_transcript(&bytes)
        .with_context(|| format!("decoding transcript {}", args.transcript.display()))?;
    let channels: BTreeSet<adversary::Channel> = match &args.channels {
        None => ALL_CHANNELS.into_iter().collect(),
        Some(list) => list
            .split(',')
            .map(|tok| {
                adversary::parse_channel(tok.trim()).ok_or_else(|| {
                    anyhow!(UsageError(format!(
                        "bad channel {tok:?}; use forms like B-A"
                    )))
                })
            })
            .collect::<Result<_>>()?,
    };
    let view = EavesdropperView::filtered(&transcript, channels);
    let params = transcript.params();
    for report in adversary::run_all(&view, params) {
        println!("{}", report.to_json_line());
    }

    // Keys for the hygiene scan: whatever the transcript itself exposes,
    // plus the seed-derived set when a seed is given.
    let mut known: Vec<Key> = Vec::new();
    for entry in transcript.entries() {
        match &entry.message.payload {
            Payload::StartRequestWithKey { mk_b, .. } => known.push(*mk_b),
            Payload::DelegationKeyToCloud { tk, .. } => known.push(*tk),
            _ => {}
        }
    }
    if let Some(seed) = &args.seed {
        known.extend(parse_seed(seed)?.keys().all());
    }
    let hits = adversary::scan_key_material(&transcript, &known);
    let hits_json: Vec<String> = hits
        .iter()
        .map(|h| {
            format!(
                r#"{{"message_index":{},"label":"{}"}}"#,
                h.message_index,
                h.label.name()
            )
        })
        .collect();
    println!(
        r#"{{"scan":"key-material","keys_scanned":{},"hits":[{}]}}"#,
        known.len(),
        hits_json.join(",")
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let c_values: Vec<usize> = args
        .c_list
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!(UsageError(format!("bad cardinality {t:?}: {e}"))))
        })
        .collect::<Result<_>>()?;
    if c_values.is_empty() {
        bail!(UsageError("the cardinality list is empty".into()));
    }
    if args.trials < 1 {
        bail!(UsageError("need at least one trial".into()));
    }
    let seed_bytes: [u8; 16] = match &args.seed {
        Some(s) => hex::decode(s)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| anyhow!(UsageError("seed must be 32 hex chars".into())))?,
        None => *b"eopsi-bench-seed",
    };

    let mut all_rows = Vec::new();
    let mut exact = true;
    for scheme in [Scheme::Eo, Scheme::Improved] {
        let rows = bench_sweep(
            &c_values,
            args.bin_capacity,
            scheme,
            args.trials,
            args.fail_prob,
            seed_bytes,
        )?;
        // Check each cardinality's online counters against the cost model.
        for &c in &c_values {
            let h = rows
                .iter()
                .find(|r| r.c == c)
                .map(|r| r.h)
                .expect("rows cover every c");
            let expected = expected_counts(scheme, h as u64, args.bin_capacity as u64);
            for row in rows.iter().filter(|r| r.c == c && r.phase == Phase::Online) {
                let want = expected.for_party(row.party);
                if (row.adds, row.muls, row.interp_factor)
                    != (want.adds, want.muls, want.interp_factor)
                {
                    exact = false;
                    eprintln!(
                        "mismatch: {} c={} party {} got adds={} muls={} if={}, want adds={} muls={} if={}",
                        scheme.name(), c, row.party, row.adds, row.muls, row.interp_factor,
                        want.adds, want.muls, want.interp_factor
                    );
                }
            }
        }
        all_rows.extend(rows);
    }
    all_rows.sort_by_key(|r| (r.scheme, r.c, r.party, r.phase));
    write_bytes(&args.out, metrics::rows_to_csv(&all_rows).as_bytes())?;
    eprintln!("wrote {}", args.out.display());
    if exact {
        println!("counts: EXACT MATCH");
        Ok(())
    } else {
        println!("counts: MISMATCH");
        bail!(ProtocolError::Config(
            "measured counters diverge from the cost model".into()
        ))
    }
}

fn load_params(store_dir: &Path) -> Result<PublicParams> {
    let path = store_dir.join(STORE_PARAMS);
    let bytes = read_bytes(&path, "parameters")?;
    Ok(wire::decode_params(&bytes)?)
}

fn store_file(store_dir: &Path, party: PartyId) -> PathBuf {
    store_dir.join(format!("store_{}.bin", party.short()))
}

fn cmd_setup(args: SetupArgs) -> Result<()> {
    let seeds = parse_seed(&args.seed)?;
    let params = cloud_setup(&args.params.setup_config(), &seeds.xs_seed())?;
    let mut bytes = Vec::new();
    wire::encode_params(&params, &mut bytes);
    write_bytes(&args.store_dir.join(STORE_PARAMS), &bytes)?;
    eprintln!(
        "published parameters: p={} c={} h={} d={} n={}",
        params.field.modulus(),
        params.cardinality,
        params.table.bins(),
        params.table.capacity(),
        params.table.points()
    );
    Ok(())
}

fn cmd_outsource(args: OutsourceArgs) -> Result<()> {
    let seeds = parse_seed(&args.seed)?;
    let keys = seeds.keys();
    if args.dump_secrets {
        dump_secrets(&keys);
    }
    let params = load_params(&args.store_dir)?;
    let set = read_set_file(&args.set_file)?;
    let mut ctr = OpCounters::new();
    let msg = outsource(
        args.party,
        &set,
        &keys.master_for(args.party),
        &keys.pad_for(args.party),
        &params,
        args.scheme.scheme,
        &mut ctr,
    )?;
    let Payload::Outsource { o, .. } = &msg.payload else {
        unreachable!("outsource builds an outsource payload")
    };
    write_bytes(
        &store_file(&args.store_dir, args.party),
        &wire::encode_matrix_file(o),
    )?;
    eprintln!(
        "outsourced {} elements for {} ({} scheme)",
        set.len(),
        args.party,
        args.scheme.scheme.name()
    );
    Ok(())
}

fn cmd_delegate(args: StepArgs) -> Result<()> {
    let seeds = parse_seed(&args.seed)?;
    let keys = seeds.keys();
    let params = load_params(&args.store_dir)?;
    let mut ctr = OpCounters::new();
    match args.scheme.scheme {
        Scheme::Improved => {
            let msg = improved::delegate(
                PartyId::ClientA,
                PartyId::ClientB,
                &keys.mk_a,
                &keys.tk1,
                &params,
                &mut ctr,
            );
            write_bytes(
                &args.store_dir.join(STORE_DELEGATE),
                &wire::encode_message(&msg, &params),
            )?;
        }
        Scheme::Eo => {
            let (q_msg, tk_msg) = eo::delegate(
                PartyId::ClientA,
                PartyId::ClientB,
                &keys.mk_a,
                &keys.mk_b,
                &keys.tk,
                &params,
                &mut ctr,
            );
            write_bytes(
                &args.store_dir.join(STORE_DELEGATE_Q),
                &wire::encode_message(&q_msg, &params),
            )?;
            write_bytes(
                &args.store_dir.join(STORE_DELEGATE_TK),
                &wire::encode_message(&tk_msg, &params),
            )?;
        }
    }
    eprintln!("delegation written ({} scheme)", args.scheme.scheme.name());
    Ok(())
}

fn load_store(store_dir: &Path, params: &PublicParams) -> Result<CloudStore> {
    let mut store = CloudStore::new();
    for party in [PartyId::ClientA, PartyId::ClientB] {
        let path = store_file(store_dir, party);
        let bytes = read_bytes(&path, "cloud store")?;
        store.insert(party, wire::decode_matrix_file(&bytes, params.field)?);
    }
    Ok(store)
}

fn decode_message_file(path: &Path, role: &str, params: &PublicParams) -> Result<Message> {
    let bytes = read_bytes(path, role)?;
    wire::decode_message(&bytes, params)
        .with_context(|| format!("decoding the {role} file {}", path.display()))
}

fn cmd_cloud(args: StepArgs) -> Result<()> {
    let seeds = parse_seed(&args.seed)?;
    let keys = seeds.keys();
    let params = load_params(&args.store_dir)?;
    let store = load_store(&args.store_dir, &params)?;
    let mut ctr = OpCounters::new();
    let result = match args.scheme.scheme {
        Scheme::Improved => {
            let msg =
                decode_message_file(&args.store_dir.join(STORE_DELEGATE), "delegation", &params)?;
            let Payload::DelegationToCloud { a, b, q } = &msg.payload else {
                bail!(ProtocolError::UnexpectedMessage(
                    "expected a delegation message"
                ));
            };
            improved::cloud_compute(q, *a, *b, &keys.tk2, &store, &params, &mut ctr)?
        }
        Scheme::Eo => {
            let msg = decode_message_file(
                &args.store_dir.join(STORE_DELEGATE_TK),
                "delegation key",
                &params,
            )?;
            let Payload::DelegationKeyToCloud { a, b, tk } = &msg.payload else {
                bail!(ProtocolError::UnexpectedMessage(
                    "expected a delegation key message"
                ));
            };
            eo::cloud_compute(tk, *a, *b, &store, &params, &mut ctr)?
        }
    };
    write_bytes(
        &args.store_dir.join(STORE_RESULT),
        &wire::encode_message(&result, &params),
    )?;
    eprintln!(
        "cloud result written ({} scheme)",
        args.scheme.scheme.name()
    );
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<()> {
    let seeds = parse_seed(&args.seed)?;
    let keys = seeds.keys();
    let params = load_params(&args.store_dir)?;
    let mut ctr = OpCounters::new();
    let result = decode_message_file(&args.store_dir.join(STORE_RESULT), "result", &params)?;
    let intersection = match args.scheme.scheme {
        Scheme::Improved => {
            let Payload::CloudResultImproved { q_prime, q_dprime } = &result.payload else {
                bail!(ProtocolError::UnexpectedMessage(
                    "expected an improved-scheme result"
                ));
            };
            improved::retrieve(q_prime, q_dprime, &keys.mk_b, &params, &mut ctr)?
        }
        Scheme::Eo => {
            let Payload::CloudResultEo { t } = &result.payload else {
                bail!(ProtocolError::UnexpectedMessage(
                    "expected a baseline result"
                ));
            };
            let q_msg = decode_message_file(
                &args.store_dir.join(STORE_DELEGATE_Q),
                "masked combination",
                &params,
            )?;
            let Payload::QToB { q } = &q_msg.payload else {
                bail!(ProtocolError::UnexpectedMessage("expected the q message"));
            };
            eo::retrieve(t, q, &params, &mut ctr)?
        }
    };
    if let Some(path) = &args.set_file {
        let own = read_set_file(path)?;
        let own: BTreeSet<u64> = own.into_iter().collect();
        if !intersection.is_subset(&own) {
            eprintln!("warning: result contains elements outside B's own set");
        }
    }
    print_intersection(&intersection, &args.out)
}
