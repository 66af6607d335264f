use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use chronoscrape_core::crawler::{CrawlConfig, CrawlMetrics};
use chronoscrape_core::query::form::{is_query_field, query_from_pairs};
use chronoscrape_core::query::QueryArguments;
use serde::{Deserialize, Serialize};

pub const KNOWN_SPIDERS: &[&str] = &["twitter"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Running,
    Finished,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Finished | JobState::Failed | JobState::Cancelled)
    }

    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Pending, Running) | (Pending, Cancelled) | (Running, Finished) | (Running, Failed) | (Running, Cancelled)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Pending => "pending",
            JobState::Running => "running",
            JobState::Finished => "finished",
            JobState::Failed => "failed",
            JobState::Cancelled => "cancelled",
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-job overrides of the daemon's crawl defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlOverrides {
    pub base_url: Option<String>,
    pub politeness_delay_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub request_timeout_ms: Option<u64>,
    pub user_agent: Option<String>,
}

impl CrawlOverrides {
    pub fn apply(&self, mut cfg: CrawlConfig) -> CrawlConfig {
        if let Some(ms) = self.politeness_delay_ms {
            cfg.politeness_delay = Duration::from_millis(ms);
        }
        if let Some(n) = self.max_retries {
            cfg.max_retries = n;
        }
        if let Some(ms) = self.retry_backoff_ms {
            cfg.retry_backoff = Duration::from_millis(ms);
        }
        if let Some(ms) = self.request_timeout_ms {
            cfg.request_timeout = Duration::from_millis(ms);
        }
        if let Some(ua) = &self.user_agent {
            cfg.headers.insert("User-Agent".into(), ua.clone());
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobParameters {
    pub query: QueryArguments,
    #[serde(default)]
    pub crawl: CrawlOverrides,
}

/// A validated `/schedule.json` request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleRequest {
    pub project: String,
    pub spider: String,
    pub parameters: JobParameters,
}

pub const BASE_URL: &str = "base-url";
pub const POLITENESS_DELAY: &str = "politeness-delay";
pub const MAX_RETRIES: &str = "max-retries";
pub const RETRY_BACKOFF: &str = "retry-backoff";
pub const REQUEST_TIMEOUT: &str = "request-timeout";
pub const USER_AGENT: &str = "user-agent";

/// Parse the form fields of a schedule request, reporting every problem.
pub fn parse_schedule_form(pairs: &[(String, String)]) -> Result<ScheduleRequest, Vec<String>> {
    let mut problems = Vec::new();
    let mut project = None;
    let mut spider = None;
    let mut crawl = CrawlOverrides::default();
    let mut query_pairs = Vec::new();

    fn number<T: std::str::FromStr>(key: &str, value: &str, problems: &mut Vec<String>) -> Option<T> {
        match value.trim().parse() {
            Ok(v) => Some(v),
            Err(_) => {
                problems.push(format!("malformed {key} {value:?}: expected a non-negative integer"));
                None
            }
        }
    }

    for (key, value) in pairs {
        match key.as_str() {
            "project" => project = Some(value.trim().to_string()),
            "spider" => spider = Some(value.trim().to_string()),
            BASE_URL => crawl.base_url = Some(value.trim().trim_end_matches('/').to_string()),
            POLITENESS_DELAY => crawl.politeness_delay_ms = number(key, value, &mut problems),
            MAX_RETRIES => crawl.max_retries = number(key, value, &mut problems),
            RETRY_BACKOFF => crawl.retry_backoff_ms = number(key, value, &mut problems),
            REQUEST_TIMEOUT => crawl.request_timeout_ms = number(key, value, &mut problems),
            USER_AGENT => crawl.user_agent = Some(value.clone()),
            k if is_query_field(k) => query_pairs.push((key.clone(), value.clone())),
            other => problems.push(format!("unknown parameter {other:?}")),
        }
    }

    match project.as_deref() {
        None | Some("") => problems.push("missing project".into()),
        _ => {}
    }
    match spider.as_deref() {
        None | Some("") => problems.push("missing spider".into()),
        Some(s) if !KNOWN_SPIDERS.contains(&s) => problems.push(format!("unknown spider {s:?}")),
        _ => {}
    }
    if crawl.request_timeout_ms == Some(0) {
        problems.push("request-timeout must be positive".into());
    }
    if let Some(url) = &crawl.base_url {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            problems.push(format!("base-url {url:?} is not an http(s) URL"));
        }
    }
    let query = match query_from_pairs(query_pairs) {
        Ok(q) => Some(q),
        Err(v) => {
            problems.extend(v.messages());
            None
        }
    };

    match (problems.is_empty(), query) {
        (true, Some(query)) => Ok(ScheduleRequest {
            project: project.unwrap_or_default(),
            spider: spider.unwrap_or_default(),
            parameters: JobParameters { query, crawl },
        }),
        _ => Err(problems),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    /// Submission order.
    pub seq: u64,
    pub project: String,
    pub spider: String,
    pub parameters: JobParameters,
    pub state: JobState,
    pub submitted_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub ended_at: Option<DateTime<Utc>>,
    pub log_path: PathBuf,
    pub metrics: Option<CrawlMetrics>,
    /// Items in the job's store after the crawl.
    pub items: Option<u64>,
    pub error: Option<String>,
}

impl JobRecord {
    /// Move to `next`, stamping times. Refuses illegal transitions.
    pub fn transition(&mut self, next: JobState, at: DateTime<Utc>) -> Result<(), String> {
        if !self.state.can_become(next) {
            return Err(format!("job {} cannot go from {} to {}", self.job_id, self.state, next));
        }
        if next == JobState::Running {
            self.started_at = Some(at);
        }
        if next.is_terminal() {
            self.ended_at = Some(at);
        }
        self.state = next;
        Ok(())
    }
}
