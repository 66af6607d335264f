//! In-process transports for unit tests.

use std::collections::VecDeque;
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use tokio::time::Instant;

use super::transport::{FetchRequest, HttpResponse, Transport, TransportError};

type Reply = Result<HttpResponse, TransportError>;

/// Replays a fixed list of replies, then repeats the last one.
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Reply>>,
    last: Mutex<Option<Reply>>,
    times: Mutex<Vec<Instant>>,
    urls: Mutex<Vec<String>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = Reply>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            last: Mutex::new(None),
            times: Mutex::new(Vec::new()),
            urls: Mutex::new(Vec::new()),
        }
    }

    pub fn repeating(reply: Reply) -> Self {
        Self::new([reply])
    }

    pub fn calls(&self) -> usize {
        self.times.lock().unwrap().len()
    }

    pub fn call_times(&self) -> Vec<Instant> {
        self.times.lock().unwrap().clone()
    }

    #[allow(dead_code)]
    pub fn urls(&self) -> Vec<String> {
        self.urls.lock().unwrap().clone()
    }
}

impl Transport for ScriptedTransport {
    async fn get(&self, request: FetchRequest<'_>) -> Reply {
        self.times.lock().unwrap().push(Instant::now());
        self.urls.lock().unwrap().push(request.url.to_string());
        let next = self.replies.lock().unwrap().pop_front();
        let mut last = self.last.lock().unwrap();
        match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().expect("script has at least one reply"),
        }
    }
}

/// A tiny search service: every tweet matches every query, windows filter
/// by day, pages hold `page_size` tweets newest first.
pub struct FakeSearch {
    /// (id, unix seconds), any order.
    pub tweets: Vec<(u64, i64)>,
    pub page_size: usize,
    /// Fail every request whose 1-based sequence number is listed.
    pub fail_on: Vec<usize>,
    log: Mutex<Vec<String>>,
}

impl FakeSearch {
    pub fn new(tweets: Vec<(u64, i64)>) -> Self {
        Self {
            tweets,
            page_size: 20,
            fail_on: Vec::new(),
            log: Mutex::new(Vec::new()),
        }
    }

    /// `per_day[i]` tweets on day `start + i`, spaced one minute apart.
    pub fn daily(start: NaiveDate, per_day: &[usize]) -> Self {
        let mut tweets = Vec::new();
        let mut id = 1000;
        for (d, n) in per_day.iter().enumerate() {
            let day = start + chrono::Days::new(d as u64);
            let base = day.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
            for i in 0..*n {
                id += 1;
                tweets.push((id, base + 60 * i as i64));
            }
        }
        Self::new(tweets)
    }

    pub fn requests(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    fn window_of(q: &str) -> (NaiveDate, NaiveDate) {
        let find = |key: &str| {
            q.split(' ')
                .find_map(|t| t.strip_prefix(key))
                .and_then(|d| d.parse::<NaiveDate>().ok())
                .expect("window in query")
        };
        (find("since:"), find("until:"))
    }

    fn page_after(&self, q: &str, before: Option<u64>) -> Vec<(u64, i64)> {
        let (since, until) = Self::window_of(q);
        let mut hits: Vec<(u64, i64)> = self
            .tweets
            .iter()
            .copied()
            .filter(|(id, secs)| {
                let d = DateTime::<Utc>::from_timestamp(*secs, 0).unwrap().date_naive();
                d >= since && d <= until && before.is_none_or(|b| *id < b)
            })
            .collect();
        hits.sort_by(|a, b| b.1.cmp(&a.1).then(b.0.cmp(&a.0)));
        hits.truncate(self.page_size);
        hits
    }

    pub fn tweet_html(items: &[(u64, i64)]) -> String {
        items
            .iter()
            .map(|(id, secs)| {
                format!(
                    r#"<div class="tweet" data-tweet-id="{id}" data-time="{secs}" data-author="u{id}"><p class="tweet-text">post {id}</p></div>"#
                )
            })
            .collect()
    }
}

impl Transport for FakeSearch {
    async fn get(&self, request: FetchRequest<'_>) -> Reply {
        let n = {
            let mut log = self.log.lock().unwrap();
            log.push(request.url.to_string());
            log.len()
        };
        if self.fail_on.contains(&n) {
            return Ok(HttpResponse { status: 503, body: String::new(), retry_after: None });
        }
        let url = url::Url::parse(request.url).unwrap();
        let param = |k: &str| {
            url.query_pairs()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.into_owned())
        };
        let q = param("q").unwrap();
        let body = if url.path() == "/search" {
            let page = self.page_after(&q, None);
            let cursor = match page.last() {
                Some((id, _)) => format!(r#" data-max-position="c-{id}""#),
                None => String::new(),
            };
            format!(
                r#"<html><body><div class="stream-container"{cursor}>{}</div></body></html>"#,
                Self::tweet_html(&page)
            )
        } else {
            let before: u64 = param("min_position").unwrap()[2..].parse().unwrap();
            let page = self.page_after(&q, Some(before));
            let min = page.last().map_or(String::new(), |(id, _)| format!("c-{id}"));
            serde_json::json!({
                "items_html": Self::tweet_html(&page),
                "min_position": min,
                "has_more_items": !page.is_empty(),
            })
            .to_string()
        };
        Ok(HttpResponse { status: 200, body, retry_after: None })
    }
}
