//! Side-by-side runs of two collection strategies against the mock target.
//!
//! The restricted strategy pages one search request over the whole range
//! through the rate-limited, history-capped mode and waits out every 429. The
//! scrape strategy runs the day-window crawler against the unrestricted mode.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use chronoscrape_core::crawler::{
    CrawlConfig, CrawlError, Crawler, FetchRequest, HttpTransport, Transport, TransportError,
};
use chronoscrape_core::extract::Extractor;
use chronoscrape_core::pipeline::{IngestPipeline, ItemStore, MemoryStore};
use chronoscrape_core::query::{encode_component, DateRange, QueryArguments, QueryError, SearchEndpoints};
use chronoscrape_mock::{oracle, Corpus, CorpusConfig, MockHandle, ServerMode, DEFAULT_VOCABULARY};
use serde::{Deserialize, Serialize};

pub const CLIENT_HEADER: &str = "X-Client-Id";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("query: {0}")]
    Query(#[from] QueryError),
    #[error("crawl: {0}")]
    Crawl(#[from] CrawlError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("unexpected HTTP {status} from {url}")]
    Status { status: u16, url: String },
    #[error("unreadable page: {0}")]
    Page(String),
    #[error("mock server: {0}")]
    Io(#[from] io::Error),
    #[error("report: {0}")]
    Report(#[from] csv::Error),
}

/// Outcome of one strategy run.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub ids: BTreeSet<String>,
    pub requests: u64,
    /// Responses refused with 429.
    pub throttled: u64,
    pub seconds: f64,
}

/// Page the rendered search endpoint over the query's full range, following
/// `data-max-position` and sleeping for `Retry-After` on every 429.
pub async fn api_crawl<T: Transport>(
    transport: &T,
    endpoints: &SearchEndpoints,
    q: &QueryArguments,
    client_id: &str,
    config: &CrawlConfig,
) -> Result<StrategyRun, BenchError> {
    let started = Instant::now();
    let base = endpoints.primary(q, q.date_range)?;
    let mut headers = config.headers.clone();
    headers.insert(CLIENT_HEADER.into(), client_id.into());
    let mut run = StrategyRun { ids: BTreeSet::new(), requests: 0, throttled: 0, seconds: 0.0 };
    let mut cursor: Option<String> = None;
    let mut failures = 0u32;
    loop {
        let url = match &cursor {
            None => base.as_str().to_string(),
            Some(c) => format!("{}&max_position={}", base.as_str(), encode_component(c)),
        };
        run.requests += 1;
        let resp = transport
            .get(FetchRequest { url: &url, headers: &headers, timeout: config.request_timeout })
            .await;
        let resp = match resp {
            Ok(r) => r,
            Err(e) if failures < config.max_retries => {
                failures += 1;
                tracing::debug!(error = %e, "retrying");
                tokio::time::sleep(config.retry_backoff).await;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match resp.status {
            200 => failures = 0,
            429 => {
                run.throttled += 1;
                tokio::time::sleep(resp.retry_after.unwrap_or(Duration::from_secs(1))).await;
                continue;
            }
            s if s >= 500 && failures < config.max_retries => {
                failures += 1;
                tokio::time::sleep(config.retry_backoff).await;
                continue;
            }
            status => return Err(BenchError::Status { status, url }),
        }
        let page = Extractor::standard()
            .extract_page(&resp.body)
            .map_err(|e| BenchError::Page(e.to_string()))?;
        let before = run.ids.len();
        run.ids.extend(page.tweets.into_iter().map(|t| t.id));
        if run.ids.len() == before || page.cursor.is_exhausted() || cursor.as_deref() == Some(page.cursor.as_str()) {
            break;
        }
        cursor = Some(page.cursor.as_str().to_string());
    }
    run.seconds = started.elapsed().as_secs_f64();
    Ok(run)
}

/// Day-window crawl with deduplication.
pub async fn scrape_crawl(
    endpoints: &SearchEndpoints,
    q: &QueryArguments,
    config: &CrawlConfig,
) -> Result<StrategyRun, BenchError> {
    let started = Instant::now();
    let crawler = Crawler::new(HttpTransport::new(), endpoints.clone(), config.clone())?;
    let mut pipe = IngestPipeline::new(MemoryStore::default(), q.query_hash());
    let m = crawler.crawl(q, &mut pipe).await?;
    Ok(StrategyRun {
        ids: pipe.store().items().iter().map(|i| i.tweet.id.clone()).collect(),
        requests: m.requests_made,
        throttled: 0,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub corpus_size: usize,
    /// Last day of the corpus.
    pub end: NaiveDate,
    pub corpus_days: u64,
    /// Days covered by the unfiltered and filtered comparisons.
    pub recent_days: u64,
    pub filter_word: String,
    pub history_cap_days: u32,
    pub window_quota: u32,
    pub window_seconds: f64,
    pub scrape_politeness_ms: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            corpus_size: 5000,
            end: NaiveDate::from_ymd_opt(2017, 10, 30).expect("valid date"),
            corpus_days: 30,
            recent_days: 7,
            filter_word: "trump".into(),
            history_cap_days: 21,
            window_quota: 50,
            window_seconds: 10.0,
            scrape_politeness_ms: 100,
        }
    }
}

impl BenchConfig {
    pub fn corpus_range(&self) -> DateRange {
        DateRange::new(self.end - Days::new(self.corpus_days.saturating_sub(1)), self.end)
    }

    pub fn restricted_mode(&self) -> ServerMode {
        ServerMode::restricted(self.window_quota, self.window_seconds, self.history_cap_days)
    }

    pub fn scrape_config(&self) -> CrawlConfig {
        CrawlConfig {
            politeness_delay: Duration::from_millis(self.scrape_politeness_ms),
            ..CrawlConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.corpus_days == 0 || self.recent_days == 0 || self.recent_days > self.corpus_days {
            return Err("need 0 < recent_days <= corpus_days".into());
        }
        self.restricted_mode().validate()
    }

    /// The three comparisons: every word over recent days, one word over
    /// recent days, one word over the whole corpus.
    pub fn comparisons(&self) -> Vec<(Comparison, QueryArguments)> {
        let full = self.corpus_range();
        let recent = DateRange::new(self.end - Days::new(self.recent_days - 1), self.end);
        let mut unfiltered = QueryArguments::new(recent);
        unfiltered.any_words = DEFAULT_VOCABULARY.iter().map(|w| w.to_string()).collect();
        vec![
            (Comparison::Unfiltered, unfiltered),
            (Comparison::Filtered, QueryArguments::new(recent).with_all_words([self.filter_word.clone()])),
            (Comparison::Historical, QueryArguments::new(full).with_all_words([self.filter_word.clone()])),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Unfiltered,
    Filtered,
    Historical,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::Unfiltered => "unfiltered",
            Comparison::Filtered => "filtered",
            Comparison::Historical => "historical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Methodology {
    Api,
    Scrape,
}

impl Methodology {
    pub fn label(self) -> &'static str {
        match self {
            Methodology::Api => "Restricted API",
            Methodology::Scrape => "Scrape",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub comparison: Comparison,
    pub methodology: Methodology,
    pub since: NaiveDate,
    pub until: NaiveDate,
    pub total_retrieved: usize,
    /// Matches in the corpus for the requested range.
    pub expected: usize,
    pub requests: u64,
    pub throttled: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub corpus_digest: String,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, c: Comparison, m: Methodology) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.comparison == c && r.methodology == m)
    }
}

/// A scrape-mode and a restricted-mode server over one corpus.
pub struct MockPair {
    pub scrape: MockHandle,
    pub restricted: MockHandle,
}

impl MockPair {
    pub async fn start(corpus: Corpus, restricted: ServerMode) -> io::Result<Self> {
        let corpus = Arc::new(corpus);
        let local = SocketAddr::from(([127, 0, 0, 1], 0));
        let bind = || tokio::net::TcpListener::bind(local);
        Ok(Self {
            scrape: MockHandle::serve(bind().await?, Arc::clone(&corpus), ServerMode::scrape())?,
            restricted: MockHandle::serve(bind().await?, corpus, restricted)?,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        self.scrape.corpus()
    }
}

/// Run one query both ways and return (api, scrape) rows.
pub async fn compare(
    mocks: &MockPair,
    comparison: Comparison,
    q: &QueryArguments,
    scrape_config: &CrawlConfig,
    client_id: &str,
) -> Result<[BenchRow; 2], BenchError> {
    let expected = oracle(mocks.corpus(), q).len();
    let api_endpoints = SearchEndpoints::new(&mocks.restricted.base_url()).map_err(|e| BenchError::Page(e.to_string()))?;
    let scrape_endpoints = SearchEndpoints::new(&mocks.scrape.base_url()).map_err(|e| BenchError::Page(e.to_string()))?;
    let api = api_crawl(&HttpTransport::new(), &api_endpoints, q, client_id, scrape_config).await?;
    let scrape = scrape_crawl(&scrape_endpoints, q, scrape_config).await?;
    let row = |methodology, r: StrategyRun| BenchRow {
        comparison,
        methodology,
        since: q.date_range.since,
        until: q.date_range.until,
        total_retrieved: r.ids.len(),
        expected,
        requests: r.requests,
        throttled: r.throttled,
        seconds: r.seconds,
    };
    Ok([row(Methodology::Api, api), row(Methodology::Scrape, scrape)])
}

pub async fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    config.validate().map_err(BenchError::Page)?;
    let corpus = Corpus::generate(CorpusConfig::new(config.seed, config.corpus_size, config.corpus_range()));
    let digest = corpus.digest().to_string();
    let mocks = MockPair::start(corpus, config.restricted_mode()).await?;
    let scrape_config = config.scrape_config();
    let mut rows = Vec::new();
    for (i, (comparison, q)) in config.comparisons().into_iter().enumerate() {
        tracing::info!(?comparison, "running comparison");
        rows.extend(compare(&mocks, comparison, &q, &scrape_config, &format!("bench-{i}")).await?);
    }
    mocks.scrape.shutdown().await?;
    mocks.restricted.shutdown().await?;
    Ok(BenchReport { config: config.clone(), corpus_digest: digest, rows })
}

/// Elapsed seconds of (api, scrape) for `reps` repetitions of one query.
pub async fn timing_trials(
    mocks: &MockPair,
    q: &QueryArguments,
    scrape_config: &CrawlConfig,
    reps: usize,
) -> Result<Vec<(StrategyRun, StrategyRun)>, BenchError> {
    let api_endpoints = SearchEndpoints::new(&mocks.restricted.base_url()).map_err(|e| BenchError::Page(e.to_string()))?;
    let scrape_endpoints = SearchEndpoints::new(&mocks.scrape.base_url()).map_err(|e| BenchError::Page(e.to_string()))?;
    let mut out = Vec::with_capacity(reps);
    for rep in 0..reps {
        let api = api_crawl(&HttpTransport::new(), &api_endpoints, q, &format!("trial-{rep}"), scrape_config).await?;
        let scrape = scrape_crawl(&scrape_endpoints, q, scrape_config).await?;
        out.push((api, scrape));
    }
    Ok(out)
}

/// Plain-text table: a header and one line per row.
pub fn render_text(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<30} {:<24} {:>15} {:>9}", "Methodology", "Date-range", "Total retrieved", "Seconds");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<30} {:<24} {:>15} {:>9.2}",
            format!("{} ({})", r.methodology.label(), r.comparison.as_str()),
            format!("{}..{}", r.since, r.until),
            r.total_retrieved,
            r.seconds
        );
    }
    out
}

pub fn write_csv<W: io::Write>(rows: &[BenchRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<BenchRow>, BenchError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(c: Comparison, m: Methodology, n: usize) -> BenchRow {
        BenchRow {
            comparison: c,
            methodology: m,
            since: NaiveDate::from_ymd_opt(2017, 10, 1).unwrap(),
            until: NaiveDate::from_ymd_opt(2017, 10, 30).unwrap(),
            total_retrieved: n,
            expected: 40,
            requests: 7,
            throttled: 1,
            seconds: 1.25,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(Comparison::Historical, Methodology::Api, 12), row(Comparison::Filtered, Methodology::Scrape, 40)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("comparison,methodology,since,until,total_retrieved"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn text_has_header_and_rows() {
        assert_eq!(render_text(&[]).lines().count(), 1);
        let rows = vec![
            row(Comparison::Unfiltered, Methodology::Api, 40),
            row(Comparison::Filtered, Methodology::Scrape, 40),
            row(Comparison::Historical, Methodology::Api, 12),
        ];
        let text = render_text(&rows);
        assert_eq!(text.lines().count(), 4);
        let header = text.lines().next().unwrap();
        let mut at = 0;
        for col in ["Methodology", "Date-range", "Total retrieved", "Seconds"] {
            let pos = header.find(col).unwrap();
            assert!(pos >= at);
            at = pos;
        }
        assert!(text.contains("Restricted API (historical)    2017-10-01..2017-10-30"));
        assert!(text.lines().last().unwrap().ends_with("1.25"));
    }

    #[test]
    fn comparisons_cover_recent_and_full_ranges() {
        let c = BenchConfig::default();
        let qs = c.comparisons();
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[0].1.date_range.num_days(), 7);
        assert_eq!(qs[2].1.date_range, c.corpus_range());
        assert_eq!(c.corpus_range().num_days(), 30);
        for (_, q) in &qs {
            q.validate().unwrap();
        }
        assert!(BenchConfig { recent_days: 31, ..c }.validate().is_err());
    }
}
