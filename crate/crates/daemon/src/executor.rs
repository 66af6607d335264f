//! Running one job.

use std::fs::{File, OpenOptions};
use std::future::Future;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::pin::Pin;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chronoscrape_core::crawler::{
    Checkpoint, CrawlConfig, CrawlError, CrawlMetrics, CrawlObserver, CrawlOptions, Crawler,
    HttpTransport, PageRecord, RequestRecord,
};
use chronoscrape_core::pipeline::{FileStore, IngestPipeline, ItemStore};
use chronoscrape_core::query::SearchEndpoints;
use serde::Serialize;
use tokio_util::sync::CancellationToken;

use crate::job::JobRecord;

/// Where a job keeps its files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLayout {
    root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn create(&self) -> std::io::Result<()> {
        for d in ["jobs", "logs", "items", "checkpoints"] {
            std::fs::create_dir_all(self.root.join(d))?;
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn jobs_dir(&self) -> PathBuf {
        self.root.join("jobs")
    }

    pub fn job_file(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(format!("{id}.json"))
    }

    pub fn log(&self, id: &str) -> PathBuf {
        self.root.join("logs").join(format!("{id}.log"))
    }

    pub fn items(&self, id: &str) -> PathBuf {
        self.root.join("items").join(format!("{id}.jsonl"))
    }

    pub fn checkpoint(&self, id: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{id}.ckpt"))
    }
}

/// Live counters of a running job.
#[derive(Debug, Default, Serialize)]
pub struct Progress {
    pub tweets: AtomicU64,
    pub pages: AtomicU64,
    pub requests: AtomicU64,
}

impl Progress {
    pub fn tweets(&self) -> u64 {
        self.tweets.load(Ordering::Relaxed)
    }
}

pub struct JobContext {
    pub record: JobRecord,
    pub log_path: PathBuf,
    pub items_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub cancel: CancellationToken,
    pub progress: Arc<Progress>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobOutcome {
    Finished {
        metrics: CrawlMetrics,
        items: u64,
    },
    Failed {
        error: String,
        metrics: Option<CrawlMetrics>,
        items: Option<u64>,
    },
    Cancelled {
        metrics: Option<CrawlMetrics>,
        items: Option<u64>,
    },
}

pub type JobFuture = Pin<Box<dyn Future<Output = JobOutcome> + Send>>;

/// Runs jobs for the scheduler.
pub trait JobExecutor: Send + Sync + 'static {
    fn run(&self, ctx: JobContext) -> JobFuture;
}

/// Executes jobs as crawls over HTTP.
#[derive(Debug, Clone)]
pub struct CrawlExecutor {
    base_url: String,
    defaults: CrawlConfig,
    transport: HttpTransport,
}

impl CrawlExecutor {
    pub fn new(base_url: impl Into<String>, defaults: CrawlConfig) -> Self {
        Self {
            base_url: base_url.into(),
            defaults,
            transport: HttpTransport::new(),
        }
    }
}

struct LogObserver {
    file: Option<File>,
    progress: Arc<Progress>,
}

impl CrawlObserver for LogObserver {
    fn on_request(&mut self, r: &RequestRecord) {
        self.progress.requests.fetch_add(1, Ordering::Relaxed);
        if let Some(f) = &mut self.file {
            if let Err(e) = writeln!(f, "{}", r.log_line()) {
                tracing::warn!(error = %e, "job log write failed");
            }
        }
    }

    fn on_page(&mut self, p: &PageRecord) {
        self.progress.pages.fetch_add(1, Ordering::Relaxed);
        self.progress.tweets.fetch_add(p.tweets as u64, Ordering::Relaxed);
    }
}

impl JobExecutor for CrawlExecutor {
    fn run(&self, ctx: JobContext) -> JobFuture {
        let this = self.clone();
        Box::pin(async move { this.crawl(ctx).await })
    }
}

impl CrawlExecutor {
    async fn crawl(self, ctx: JobContext) -> JobOutcome {
        let params = &ctx.record.parameters;
        let failed = |error: String| JobOutcome::Failed {
            error,
            metrics: None,
            items: None,
        };
        let base = params.crawl.base_url.clone().unwrap_or(self.base_url.clone());
        let endpoints = match SearchEndpoints::new(&base) {
            Ok(e) => e,
            Err(e) => return failed(e.to_string()),
        };
        let crawler = match Crawler::new(self.transport.clone(), endpoints, params.crawl.apply(self.defaults.clone())) {
            Ok(c) => c,
            Err(e) => return failed(e.to_string()),
        };
        let store = match FileStore::open(&ctx.items_path) {
            Ok(s) => s,
            Err(e) => return failed(e.to_string()),
        };
        let q = &params.query;
        let mut pipeline = IngestPipeline::new(store, q.query_hash()).with_job_id(&ctx.record.job_id);
        let log = OpenOptions::new().create(true).append(true).open(&ctx.log_path);
        let mut observer = LogObserver {
            file: log.map_err(|e| tracing::warn!(error = %e, "cannot open job log")).ok(),
            progress: Arc::clone(&ctx.progress),
        };
        let resume = Checkpoint::load(&ctx.checkpoint_path).ok().flatten();

        let result = crawler
            .crawl_with(
                q,
                &mut pipeline,
                CrawlOptions {
                    resume,
                    checkpoint_path: Some(ctx.checkpoint_path.clone()),
                    cancel: ctx.cancel.clone(),
                    observer: Some(&mut observer),
                },
            )
            .await;
        let items = pipeline.store().len() as u64;
        let summary = match &result {
            Ok(m) => format!(
                "done: tweets_retrieved={} requests_made={} stored={} elapsed={:.3}s",
                m.tweets_retrieved, m.requests_made, items, m.elapsed_seconds
            ),
            Err(e) => format!("stopped: {e}"),
        };
        if let Some(f) = &mut observer.file {
            let _ = writeln!(f, "{summary}");
        }
        match result {
            Ok(metrics) => JobOutcome::Finished { metrics, items },
            Err(e) if e.is_cancelled() => JobOutcome::Cancelled {
                metrics: e.metrics().cloned(),
                items: Some(items),
            },
            Err(e @ CrawlError::Aborted { .. }) => JobOutcome::Failed {
                error: e.to_string(),
                metrics: e.metrics().cloned(),
                items: Some(items),
            },
            Err(e) => failed(e.to_string()),
        }
    }
}
