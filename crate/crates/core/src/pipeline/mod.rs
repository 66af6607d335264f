//! Item pipeline: every crawled tweet becomes a [`StoredItem`], is
//! deduplicated by `(query_hash, id)` and appended to an [`ItemStore`].

mod export;
mod store;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::extract::Tweet;

pub use export::{
    read_jsonl, sorted_for_export, write_csv, write_csv_to, write_export, write_jsonl,
    write_jsonl_to, write_plaintext, write_plaintext_to, ExportError, ExportFormat, ExportGeo,
    ExportRecord,
};
pub use store::{FileStore, MemoryStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredItem {
    pub tweet: Tweet,
    pub query_hash: String,
    pub job_id: Option<String>,
    pub stored_at: DateTime<Utc>,
}

impl StoredItem {
    pub fn key(&self) -> (&str, &str) {
        (&self.query_hash, &self.tweet.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    Duplicate,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store is not writable: {0}")]
    Unwritable(#[from] std::io::Error),
    #[error("corrupt store line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Append-only keyed item storage.
pub trait ItemStore {
    /// Append unless an item with the same key is already stored.
    fn dedupe_append(&mut self, item: StoredItem) -> Result<AppendOutcome, StoreError>;

    /// Append without the uniqueness check.
    fn append_raw(&mut self, item: StoredItem) -> Result<(), StoreError>;

    /// Items in insertion order.
    fn items(&self) -> &[StoredItem];

    fn len(&self) -> usize {
        self.items().len()
    }

    fn is_empty(&self) -> bool {
        self.items().is_empty()
    }
}

/// Consumer of crawled tweets.
pub trait TweetSink {
    fn accept(&mut self, tweet: Tweet) -> Result<(), StoreError>;
}

impl TweetSink for Vec<Tweet> {
    fn accept(&mut self, tweet: Tweet) -> Result<(), StoreError> {
        self.push(tweet);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub emitted: u64,
    pub appended: u64,
    pub duplicates: u64,
}

/// Sink that wraps tweets into items and stores them.
#[derive(Debug)]
pub struct IngestPipeline<S> {
    store: S,
    query_hash: String,
    job_id: Option<String>,
    dedupe: bool,
    stats: IngestStats,
}

impl<S: ItemStore> IngestPipeline<S> {
    pub fn new(store: S, query_hash: impl Into<String>) -> Self {
        Self {
            store,
            query_hash: query_hash.into(),
            job_id: None,
            dedupe: true,
            stats: IngestStats::default(),
        }
    }

    pub fn with_job_id(mut self, job_id: impl Into<String>) -> Self {
        self.job_id = Some(job_id.into());
        self
    }

    /// Disable deduplication; the store then keeps every emitted tweet.
    pub fn with_dedupe(mut self, dedupe: bool) -> Self {
        self.dedupe = dedupe;
        self
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn into_store(self) -> S {
        self.store
    }
}

impl<S: ItemStore> TweetSink for IngestPipeline<S> {
    fn accept(&mut self, tweet: Tweet) -> Result<(), StoreError> {
        let item = StoredItem {
            tweet,
            query_hash: self.query_hash.clone(),
            job_id: self.job_id.clone(),
            stored_at: Utc::now(),
        };
        self.stats.emitted += 1;
        if !self.dedupe {
            self.store.append_raw(item)?;
            self.stats.appended += 1;
            return Ok(());
        }
        match self.store.dedupe_append(item)? {
            AppendOutcome::Appended => self.stats.appended += 1,
            AppendOutcome::Duplicate => self.stats.duplicates += 1,
        }
        Ok(())
    }
}
