//! A deterministic simulated search service.
//!
//! Serves a seeded [`Corpus`] through the rendered search page and the JSON
//! timeline endpoint, optionally behind a per-client quota and a bounded
//! history window, and records every request in a ledger for inspection.

pub mod corpus;
pub mod mode;
pub mod predicate;
pub mod render;
pub mod server;

pub use corpus::{Corpus, CorpusConfig, MockTweet, DEFAULT_VOCABULARY};
pub use mode::{ModeKind, RateGate, ServerMode};
pub use predicate::{oracle, Predicate};
pub use server::{router, DigestInfo, LedgerEntry, MockHandle, SEARCH_PATH, TIMELINE_PATH};
