use std::fmt;
use std::time::Duration;

use chrono::Utc;
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

use super::transport::{FetchRequest, Transport};
use super::{CrawlConfig, CrawlObserver, RequestRecord};
use crate::extract::ExtractError;
use crate::query::EndpointUrl;

/// Upper bound on consecutive rate-limit waits for one request.
const MAX_RATE_WAITS: u32 = 1_000;

/// Why one attempt failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptFailure {
    Transport(String),
    Status(u16),
    Malformed(String),
}

impl fmt::Display for AttemptFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttemptFailure::Transport(e) => write!(f, "{e}"),
            AttemptFailure::Status(s) => write!(f, "HTTP status {s}"),
            AttemptFailure::Malformed(e) => write!(f, "malformed payload: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("gave up after {attempts} attempts, last failure: {last}")]
    Exhausted { attempts: u32, last: AttemptFailure },
    #[error("request rejected with HTTP status {status}")]
    Rejected { status: u16 },
    #[error("still rate limited after {0} waits")]
    RateLimited(u32),
    #[error("cancelled")]
    Cancelled,
}

impl FetchError {
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            FetchError::Exhausted {
                last: AttemptFailure::Transport(_) | AttemptFailure::Status(_),
                ..
            } | FetchError::RateLimited(_)
        )
    }
}

/// Body of a successful fetch and the attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedBody {
    pub body: String,
    pub attempts: u32,
}

/// Sequential request pacing, retries and request accounting for one crawl.
pub(crate) struct FetchSession<'a, 'o, T> {
    transport: &'a T,
    config: &'a CrawlConfig,
    cancel: CancellationToken,
    observer: Option<&'o mut (dyn CrawlObserver + 'o)>,
    last_request_end: Option<Instant>,
    pub(crate) requests_made: u64,
}

impl<'a, 'o, T: Transport> FetchSession<'a, 'o, T> {
    pub(crate) fn new(
        transport: &'a T,
        config: &'a CrawlConfig,
        cancel: CancellationToken,
        observer: Option<&'o mut (dyn CrawlObserver + 'o)>,
    ) -> Self {
        Self {
            transport,
            config,
            cancel,
            observer,
            last_request_end: None,
            requests_made: 0,
        }
    }

    pub(crate) fn observer(&mut self) -> Option<&mut (dyn CrawlObserver + 'o)> {
        self.observer.as_deref_mut()
    }

    pub(crate) fn is_cancelled(&self) -> bool {
        self.cancel.is_cancelled()
    }

    async fn sleep(&self, d: Duration) -> Result<(), FetchError> {
        if d.is_zero() {
            return Ok(());
        }
        tokio::select! {
            _ = self.cancel.cancelled() => Err(FetchError::Cancelled),
            _ = tokio::time::sleep(d) => Ok(()),
        }
    }

    async fn pace(&self) -> Result<(), FetchError> {
        if let Some(last) = self.last_request_end {
            let ready = last + self.config.politeness_delay;
            let now = Instant::now();
            if ready > now {
                self.sleep(ready - now).await?;
            }
        }
        Ok(())
    }

    fn record(&mut self, url: &EndpointUrl, status: Option<u16>, tweets: Option<usize>, note: Option<String>) {
        let rec = RequestRecord {
            at: Utc::now(),
            url: url.full_url.clone(),
            status,
            tweets,
            note,
        };
        tracing::debug!(target: "chronoscrape::fetch", "{}", rec.log_line());
        if let Some(obs) = self.observer.as_deref_mut() {
            obs.on_request(&rec);
        }
    }

    /// GET `url` and decode the body. `decode` returns the value plus the
    /// number of tweets it carried, for the request log. A decode failure
    /// consumes a retry like a server error does.
    pub(crate) async fn fetch<D, F>(&mut self, url: &EndpointUrl, mut decode: F) -> Result<(D, u32), FetchError>
    where
        F: FnMut(&str) -> Result<(D, usize), ExtractError>,
    {
        let mut failures: u32 = 0;
        let mut rate_waits: u32 = 0;
        loop {
            if self.cancel.is_cancelled() {
                return Err(FetchError::Cancelled);
            }
            self.pace().await?;
            if self.cancel.is_cancelled() {
                return Err(FetchError::Cancelled);
            }

            self.requests_made += 1;
            let response = self
                .transport
                .get(FetchRequest {
                    url: &url.full_url,
                    headers: &self.config.headers,
                    timeout: self.config.request_timeout,
                })
                .await;
            self.last_request_end = Some(Instant::now());

            let failure = match response {
                Err(e) => {
                    self.record(url, None, None, Some(e.to_string()));
                    AttemptFailure::Transport(e.to_string())
                }
                Ok(resp) if resp.status == 429 => {
                    let wait = resp.retry_after.unwrap_or(self.config.retry_backoff);
                    self.record(url, Some(429), None, Some(format!("rate limited, waiting {wait:?}")));
                    rate_waits += 1;
                    if rate_waits > MAX_RATE_WAITS {
                        return Err(FetchError::RateLimited(rate_waits - 1));
                    }
                    self.sleep(wait).await?;
                    continue;
                }
                Ok(resp) if (200..300).contains(&resp.status) => match decode(&resp.body) {
                    Ok((value, tweets)) => {
                        self.record(url, Some(resp.status), Some(tweets), None);
                        return Ok((value, failures + 1));
                    }
                    Err(e) => {
                        self.record(url, Some(resp.status), None, Some(e.to_string()));
                        AttemptFailure::Malformed(e.to_string())
                    }
                },
                Ok(resp) if resp.status >= 500 || resp.status == 408 => {
                    self.record(url, Some(resp.status), None, None);
                    AttemptFailure::Status(resp.status)
                }
                Ok(resp) => {
                    self.record(url, Some(resp.status), None, None);
                    return Err(FetchError::Rejected { status: resp.status });
                }
            };

            if failures >= self.config.max_retries {
                return Err(FetchError::Exhausted {
                    attempts: failures + 1,
                    last: failure,
                });
            }
            let backoff = backoff_delay(self.config.retry_backoff, failures);
            tracing::warn!(%url, %failure, ?backoff, "retrying");
            self.sleep(backoff).await?;
            failures += 1;
        }
    }
}

/// `base × 2^attempt`, saturating.
pub fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    if base.is_zero() {
        return Duration::ZERO;
    }
    2u32.checked_pow(attempt)
        .and_then(|m| base.checked_mul(m))
        .unwrap_or(Duration::MAX)
}

/// Fetch `url` with pacing, exponential backoff and rate-limit waits.
pub async fn fetch_with_retry<T: Transport>(
    transport: &T,
    url: &EndpointUrl,
    config: &CrawlConfig,
) -> Result<FetchedBody, FetchError> {
    let mut session = FetchSession::new(transport, config, CancellationToken::new(), None);
    let (body, attempts) = session
        .fetch(url, |b| Ok((b.to_string(), 0)))
        .await?;
    Ok(FetchedBody { body, attempts })
}
