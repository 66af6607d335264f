//! The two-phase, per-day, k-round crawl.
//!
//! For every round and every day of the query's range:
//!
//! 1. fetch the rendered search page and keep re-fetching it while it yields
//!    tweets not yet seen in this phase; remember the last cursor;
//! 2. feed that cursor to the timeline endpoint and follow each payload's
//!    `min_position` while pages carry tweets and `has_more_items` holds.
//!
//! Requests of one crawl are strictly sequential. Rounds after the first
//! re-sweep the same windows; the sink's deduplication absorbs repeats.

mod checkpoint;
mod retry;
#[cfg(test)]
pub(crate) mod testing;
mod transport;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio_util::sync::CancellationToken;

use crate::extract::{parse_continuation, CursorPosition, Extractor, SelectorTable, Tweet};
use crate::pipeline::TweetSink;
use crate::query::{DateRange, QueryArguments, SearchEndpoints, Violations};

pub use checkpoint::{Checkpoint, CheckpointError, Phase};
pub use retry::{backoff_delay, fetch_with_retry, AttemptFailure, FetchError, FetchedBody};
pub use transport::{
    parse_retry_after, FetchRequest, HttpResponse, HttpTransport, Transport, TransportError,
};

pub const DEFAULT_USER_AGENT: &str = concat!("chronoscrape/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlConfig {
    /// Sent with every request; must include a `User-Agent`.
    pub headers: BTreeMap<String, String>,
    /// Minimum gap between the end of one request and the start of the next.
    #[serde(with = "millis")]
    pub politeness_delay: Duration,
    pub max_retries: u32,
    /// Base of the exponential backoff.
    #[serde(with = "millis")]
    pub retry_backoff: Duration,
    #[serde(with = "millis")]
    pub request_timeout: Duration,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        let mut headers = BTreeMap::new();
        headers.insert("User-Agent".to_string(), DEFAULT_USER_AGENT.to_string());
        headers.insert("Accept-Language".to_string(), "en-US,en;q=0.8".to_string());
        Self {
            headers,
            politeness_delay: Duration::from_millis(250),
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
            request_timeout: Duration::from_millis(10_000),
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self
            .headers
            .keys()
            .any(|k| k.eq_ignore_ascii_case("user-agent"))
        {
            return Err("headers must include a User-Agent".into());
        }
        if self.request_timeout.is_zero() {
            return Err("request timeout must be positive".into());
        }
        Ok(())
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCount {
    pub window: DateRange,
    pub tweets: u64,
}

/// Counts and timing of one crawl run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrawlMetrics {
    /// Tweets handed to the sink, before deduplication.
    pub tweets_retrieved: u64,
    /// HTTP attempts, including retries and rate-limited attempts.
    pub requests_made: u64,
    pub pages_phase1: u64,
    pub pages_phase2: u64,
    pub skipped_malformed: u64,
    pub elapsed_seconds: f64,
    /// Tweets handed to the sink per daily window, summed over rounds.
    pub per_window: Vec<WindowCount>,
    pub rounds: u32,
    /// Windows whose rendered page had tweets but no cursor.
    pub phase2_skipped_no_cursor: u64,
}

/// One request as it appears in a crawl log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub at: DateTime<Utc>,
    pub url: String,
    pub status: Option<u16>,
    pub tweets: Option<usize>,
    pub note: Option<String>,
}

impl RequestRecord {
    /// `TIMESTAMP GET URL status=S tweets=N [note]`
    pub fn log_line(&self) -> String {
        let status = self.status.map_or("-".to_string(), |s| s.to_string());
        let tweets = self.tweets.map_or("-".to_string(), |n| n.to_string());
        let mut line = format!(
            "{} GET {} status={} tweets={}",
            self.at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            self.url,
            status,
            tweets
        );
        if let Some(note) = &self.note {
            line.push_str(" (");
            line.push_str(note);
            line.push(')');
        }
        line
    }
}

/// A page that was fetched and handed to the sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageRecord {
    pub round: u32,
    pub window_index: usize,
    pub window: DateRange,
    pub phase: Phase,
    pub tweets: usize,
    /// Pages fetched so far in this run, both phases.
    pub pages_so_far: u64,
}

/// Hooks into a running crawl.
pub trait CrawlObserver: Send + Sync {
    fn on_request(&mut self, _record: &RequestRecord) {}
    fn on_page(&mut self, _page: &PageRecord) {}
}

#[derive(Debug, thiserror::Error)]
pub enum AbortCause {
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("sink failure: {0}")]
    Sink(#[from] crate::pipeline::StoreError),
    #[error("checkpoint failure: {0}")]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, thiserror::Error)]
pub enum CrawlError {
    #[error("invalid query: {0}")]
    InvalidQuery(Violations),
    #[error("invalid crawl configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint does not match this query: {0}")]
    CheckpointMismatch(String),
    /// The crawl stopped early; `checkpoint` names the next request.
    #[error("crawl aborted: {cause}")]
    Aborted {
        cause: AbortCause,
        metrics: Box<CrawlMetrics>,
        checkpoint: Checkpoint,
    },
}

impl CrawlError {
    pub fn is_cancelled(&self) -> bool {
        matches!(
            self,
            CrawlError::Aborted {
                cause: AbortCause::Fetch(FetchError::Cancelled),
                ..
            }
        )
    }

    pub fn metrics(&self) -> Option<&CrawlMetrics> {
        match self {
            CrawlError::Aborted { metrics, .. } => Some(metrics),
            _ => None,
        }
    }
}

/// Per-run options.
#[derive(Default)]
pub struct CrawlOptions<'a> {
    /// Continue from this position instead of the beginning.
    pub resume: Option<Checkpoint>,
    /// Keep the current position in this file while crawling.
    pub checkpoint_path: Option<PathBuf>,
    /// Interrupts the crawl at the next request boundary.
    pub cancel: CancellationToken,
    pub observer: Option<&'a mut (dyn CrawlObserver + 'a)>,
}

/// One single-day window per calendar day of `range`, ascending.
pub fn expand_windows(range: DateRange) -> Vec<DateRange> {
    range.days().map(DateRange::single).collect()
}

pub struct Crawler<T> {
    transport: T,
    endpoints: SearchEndpoints,
    config: CrawlConfig,
    extractor: Arc<Extractor>,
}

impl<T: Transport> Crawler<T> {
    pub fn new(transport: T, endpoints: SearchEndpoints, config: CrawlConfig) -> Result<Self, CrawlError> {
        config.validate().map_err(CrawlError::InvalidConfig)?;
        Ok(Self {
            transport,
            endpoints,
            config,
            extractor: Arc::new(Extractor::new(SelectorTable::default()).expect("default selectors compile")),
        })
    }

    pub fn with_extractor(mut self, extractor: Arc<Extractor>) -> Self {
        self.extractor = extractor;
        self
    }

    pub fn config(&self) -> &CrawlConfig {
        &self.config
    }

    pub fn endpoints(&self) -> &SearchEndpoints {
        &self.endpoints
    }

    pub async fn crawl<S: TweetSink + ?Sized>(
        &self,
        q: &QueryArguments,
        sink: &mut S,
    ) -> Result<CrawlMetrics, CrawlError> {
        self.crawl_with(q, sink, CrawlOptions::default()).await
    }

    pub async fn crawl_with<'o, S: TweetSink + ?Sized>(
        &self,
        q: &QueryArguments,
        sink: &mut S,
        options: CrawlOptions<'o>,
    ) -> Result<CrawlMetrics, CrawlError> {
        q.validate().map_err(CrawlError::InvalidQuery)?;
        let windows = expand_windows(q.date_range);
        let total_steps = windows.len() * q.k_rounds as usize;
        let query_hash = q.query_hash();

        let start = match options.resume {
            Some(cp) if cp.query_hash != query_hash => {
                return Err(CrawlError::CheckpointMismatch(format!(
                    "checkpoint is for query {}, this query is {}",
                    cp.query_hash, query_hash
                )))
            }
            Some(cp) if cp.window_index > total_steps => {
                return Err(CrawlError::CheckpointMismatch(format!(
                    "window index {} is beyond the {} steps of this crawl",
                    cp.window_index, total_steps
                )))
            }
            Some(cp) => cp,
            None => Checkpoint::start(query_hash),
        };

        let mut run = Run {
            crawler: self,
            q,
            session: retry::FetchSession::new(
                &self.transport,
                &self.config,
                options.cancel,
                options.observer,
            ),
            metrics: CrawlMetrics {
                per_window: windows
                    .iter()
                    .map(|w| WindowCount { window: *w, tweets: 0 })
                    .collect(),
                rounds: q.k_rounds,
                ..CrawlMetrics::default()
            },
            checkpoint_path: options.checkpoint_path,
            position: start.clone(),
            started: Instant::now(),
        };

        let outcome = run.sweep(&windows, total_steps, start, sink).await;
        run.metrics.requests_made = run.session.requests_made;
        run.metrics.elapsed_seconds = run.started.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => Ok(run.metrics),
            Err(cause) => {
                tracing::warn!(%cause, checkpoint = ?run.position, "crawl aborted");
                Err(CrawlError::Aborted {
                    cause,
                    metrics: Box::new(run.metrics),
                    checkpoint: run.position,
                })
            }
        }
    }
}

struct Run<'c, 'o, T> {
    crawler: &'c Crawler<T>,
    q: &'c QueryArguments,
    session: retry::FetchSession<'c, 'o, T>,
    metrics: CrawlMetrics,
    checkpoint_path: Option<PathBuf>,
    position: Checkpoint,
    started: Instant,
}

impl<'c, 'o, T: Transport> Run<'c, 'o, T> {
    fn set_position(&mut self, step: usize, phase: Phase, cursor: CursorPosition) -> Result<(), AbortCause> {
        self.position.window_index = step;
        self.position.phase = phase;
        self.position.cursor = cursor;
        if let Some(path) = &self.checkpoint_path {
            self.position.save(path)?;
        }
        Ok(())
    }

    async fn sweep<S: TweetSink + ?Sized>(
        &mut self,
        windows: &[DateRange],
        total_steps: usize,
        start: Checkpoint,
        sink: &mut S,
    ) -> Result<(), AbortCause> {
        for step in start.window_index..total_steps {
            let wi = step % windows.len();
            let round = (step / windows.len()) as u32 + 1;
            let window = windows[wi];

            let resume_cursor = (step == start.window_index && start.phase == Phase::Continuation)
                .then(|| start.cursor.clone());
            let cursor = match resume_cursor {
                Some(c) => c,
                None => {
                    self.set_position(step, Phase::Primary, CursorPosition::empty())?;
                    self.primary_phase(step, round, wi, window, sink).await?
                }
            };

            if !cursor.is_exhausted() {
                self.continuation_phase(step, round, wi, window, cursor, sink)
                    .await?;
            }
            self.set_position(step + 1, Phase::Primary, CursorPosition::empty())?;
        }
        if self.session.is_cancelled() {
            return Err(FetchError::Cancelled.into());
        }
        Ok(())
    }

    fn emit<S: TweetSink + ?Sized>(&mut self, wi: usize, tweets: Vec<Tweet>, sink: &mut S) -> Result<(), AbortCause> {
        let n = tweets.len() as u64;
        for t in tweets {
            sink.accept(t)?;
        }
        self.metrics.tweets_retrieved += n;
        self.metrics.per_window[wi].tweets += n;
        Ok(())
    }

    fn page_done(&mut self, round: u32, wi: usize, window: DateRange, phase: Phase, tweets: usize) {
        let page = PageRecord {
            round,
            window_index: wi,
            window,
            phase,
            tweets,
            pages_so_far: self.metrics.pages_phase1 + self.metrics.pages_phase2,
        };
        if let Some(obs) = self.session.observer() {
            obs.on_page(&page);
        }
    }

    async fn primary_phase<S: TweetSink + ?Sized>(
        &mut self,
        _step: usize,
        round: u32,
        wi: usize,
        window: DateRange,
        sink: &mut S,
    ) -> Result<CursorPosition, AbortCause> {
        let url = self
            .crawler
            .endpoints
            .primary(self.q, window)
            .expect("query validated before crawling");
        let extractor = Arc::clone(&self.crawler.extractor);
        let mut seen: HashSet<String> = HashSet::new();
        let mut cursor = CursorPosition::empty();
        let mut had_tweets = false;

        loop {
            let (page, _) = self
                .session
                .fetch(&url, |body| {
                    let page = extractor.extract_page(body)?;
                    let n = page.tweets.len();
                    Ok((page, n))
                })
                .await?;
            self.metrics.pages_phase1 += 1;
            self.metrics.skipped_malformed += page.skipped as u64;
            if !page.cursor.is_exhausted() {
                cursor = page.cursor;
            }
            let fresh: Vec<Tweet> = page
                .tweets
                .into_iter()
                .filter(|t| seen.insert(t.id.clone()))
                .collect();
            let n = fresh.len();
            had_tweets |= n > 0;
            self.emit(wi, fresh, sink)?;
            self.page_done(round, wi, window, Phase::Primary, n);
            if n == 0 {
                break;
            }
        }

        if had_tweets && cursor.is_exhausted() {
            tracing::info!(%window, "rendered page carried tweets but no cursor; skipping continuation");
            self.metrics.phase2_skipped_no_cursor += 1;
        }
        Ok(cursor)
    }

    async fn continuation_phase<S: TweetSink + ?Sized>(
        &mut self,
        step: usize,
        round: u32,
        wi: usize,
        window: DateRange,
        mut cursor: CursorPosition,
        sink: &mut S,
    ) -> Result<(), AbortCause> {
        let extractor = Arc::clone(&self.crawler.extractor);
        loop {
            self.set_position(step, Phase::Continuation, cursor.clone())?;
            let url = self
                .crawler
                .endpoints
                .continuation(self.q, window, &cursor)
                .expect("query validated and cursor non-empty");
            let ((payload, page), _) = self
                .session
                .fetch(&url, |body| {
                    let payload = parse_continuation(body)?;
                    let page = extractor.extract_tweets(&payload.items_html)?;
                    let n = page.tweets.len();
                    Ok(((payload, page), n))
                })
                .await?;
            self.metrics.pages_phase2 += 1;
            self.metrics.skipped_malformed += page.skipped as u64;
            let n = page.tweets.len();
            self.emit(wi, page.tweets, sink)?;
            self.page_done(round, wi, window, Phase::Continuation, n);

            let next = payload.min_position;
            if n == 0 || !payload.has_more_items || next.is_exhausted() || next == cursor {
                return Ok(());
            }
            cursor = next;
        }
    }
}
