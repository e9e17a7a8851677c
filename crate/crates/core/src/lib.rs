//! Delegated private set intersection over a prime field.
//!
//! Two clients hash their sets into bins, turn every bin into a monic
//! polynomial, evaluate it at a public point vector, blind the values and
//! park them at a cloud. The cloud does the heavy combining work; client B
//! interpolates the result per bin, factorizes, and keeps the roots that
//! carry the public element encoding: the intersection.
//!
//! Two schemes share that skeleton:
//!
//! * the baseline (`eo`) blinds additively and moves key material between
//!   parties, which is only safe on secure channels; the [`adversary`]
//!   module implements three passive attacks that strip it bare on public
//!   ones;
//! * the improved scheme blinds multiplicatively and keeps every key with
//!   its owner, so its transcripts contain nothing an eavesdropper can
//!   re-derive values from (with one measured exception on the cloud-to-B
//!   channel, documented in `docs/qprime-analysis.md`).
//!
//! Sessions are pure functions of a 16-byte seed and run through a
//! recording transport, so every byte a wire observer would see is
//! replayable. Modular arithmetic is tallied per party and phase and
//! checked exactly against the closed-form cost model in [`metrics`].
//!
//! ```
//! use eopsi::protocol::{run_session, Scheme, SessionConfig, SessionSeeds, SetupConfig};
//!
//! let cfg = SessionConfig {
//!     scheme: Scheme::Improved,
//!     setup: SetupConfig { cardinality: 10, capacity: 10, ..SetupConfig::default() },
//!     seeds: SessionSeeds::from_bytes([7; 16]),
//! };
//! let outcome = run_session(&cfg, &[1, 2, 3], &[2, 3, 4]).unwrap();
//! assert_eq!(outcome.intersection, [2, 3].into_iter().collect());
//! ```

pub mod adversary;
pub mod bins;
pub mod field;
pub mod metrics;
pub mod poly;
pub mod prf;
pub mod protocol;
