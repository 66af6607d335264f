//! HTTP front end of the mock target.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use axum::extract::{ConnectInfo, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Days, Utc};
use chronoscrape_core::query::{parse_query_string, DateRange};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::corpus::{Corpus, MockTweet};
use crate::mode::{RateGate, ServerMode};
use crate::predicate::Predicate;
use crate::render;

pub const SEARCH_PATH: &str = "/search";
pub const TIMELINE_PATH: &str = "/i/search/timeline";
pub const CLIENT_HEADER: &str = "x-client-id";

/// One request as seen by the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    /// Microseconds since the server started, from a monotonic clock.
    pub mono_us: u64,
    pub path: String,
    pub q: Option<String>,
    /// `min_position` or `max_position` as sent.
    pub cursor: Option<String>,
    pub status: u16,
    pub client: String,
    pub tweets: usize,
    /// Cursor handed back, if any.
    pub next_cursor: Option<String>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Faults {
    remaining: u32,
    status: u16,
}

#[derive(Debug)]
pub(crate) struct Shared {
    corpus: Arc<Corpus>,
    mode: RwLock<ServerMode>,
    ledger: Mutex<Vec<LedgerEntry>>,
    gate: Mutex<RateGate>,
    faults: Mutex<Faults>,
    started: Instant,
}

impl Shared {
    fn new(corpus: Arc<Corpus>, mode: ServerMode) -> Self {
        Self {
            corpus,
            mode: RwLock::new(mode),
            ledger: Mutex::new(Vec::new()),
            gate: Mutex::new(RateGate::default()),
            faults: Mutex::new(Faults::default()),
            started: Instant::now(),
        }
    }

    fn mode(&self) -> ServerMode {
        *self.mode.read().unwrap()
    }

    fn reset(&self) {
        self.ledger.lock().unwrap().clear();
        self.gate.lock().unwrap().clear();
        *self.faults.lock().unwrap() = Faults::default();
    }

    fn record(&self, mut e: LedgerEntry) {
        let mut ledger = self.ledger.lock().unwrap();
        e.seq = ledger.len() as u64 + 1;
        e.mono_us = self.started.elapsed().as_micros() as u64;
        ledger.push(e);
    }

    /// Dates the current mode lets clients see.
    fn visible(&self, mode: &ServerMode, window: DateRange) -> Option<DateRange> {
        let mut w = window;
        if mode.is_restricted() {
            let latest = self.corpus.range().until;
            let earliest = latest - Days::new(u64::from(mode.history_cap_days) - 1);
            w.since = w.since.max(earliest);
            w.until = w.until.min(latest);
        }
        w.is_valid().then_some(w)
    }
}

/// Build the router over a corpus.
pub fn router(corpus: Arc<Corpus>, mode: ServerMode) -> Router {
    router_with(Arc::new(Shared::new(corpus, mode)))
}

fn router_with(shared: Arc<Shared>) -> Router {
    Router::new()
        .route(SEARCH_PATH, get(search))
        .route(TIMELINE_PATH, get(timeline))
        .route("/_ledger", get(ledger))
        .route("/_corpus_digest", get(digest))
        .route("/_reset", get(reset).post(reset))
        .route("/_faults", get(faults).post(faults))
        .route("/_mode", get(get_mode).post(set_mode))
        .with_state(shared)
}

fn client_of(req: &Request) -> String {
    if let Some(id) = req.headers().get(CLIENT_HEADER).and_then(|v| v.to_str().ok()) {
        return id.to_string();
    }
    req.extensions()
        .get::<ConnectInfo<SocketAddr>>()
        .map(|c| c.0.ip().to_string())
        .unwrap_or_else(|| "local".into())
}

struct Served {
    status: StatusCode,
    headers: HeaderMap,
    body: String,
    content_type: &'static str,
    tweets: usize,
    next_cursor: Option<String>,
}

impl Served {
    fn error(status: StatusCode, msg: impl Into<String>) -> Self {
        Self {
            status,
            headers: HeaderMap::new(),
            body: msg.into(),
            content_type: "text/plain; charset=utf-8",
            tweets: 0,
            next_cursor: None,
        }
    }
}

enum Endpoint {
    Search,
    Timeline,
}

async fn search(State(s): State<Arc<Shared>>, req: Request) -> Response {
    serve(&s, req, Endpoint::Search)
}

async fn timeline(State(s): State<Arc<Shared>>, req: Request) -> Response {
    serve(&s, req, Endpoint::Timeline)
}

fn serve(s: &Shared, req: Request, which: Endpoint) -> Response {
    let client = client_of(&req);
    let params: HashMap<String, String> = Query::try_from_uri(req.uri())
        .map(|Query(p)| p)
        .unwrap_or_default();
    let q = params.get("q").cloned();
    let cursor_key = match which {
        Endpoint::Search => "max_position",
        Endpoint::Timeline => "min_position",
    };
    let cursor = params.get(cursor_key).cloned();

    let served = respond(s, &client, q.as_deref(), cursor.as_deref(), &which);
    s.record(LedgerEntry {
        seq: 0,
        at: Utc::now(),
        mono_us: 0,
        path: req.uri().path().to_string(),
        q,
        cursor,
        status: served.status.as_u16(),
        client,
        tweets: served.tweets,
        next_cursor: served.next_cursor.clone(),
    });
    let mut resp = (served.status, served.body).into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(served.content_type));
    resp.headers_mut().extend(served.headers);
    resp
}

fn respond(s: &Shared, client: &str, q: Option<&str>, cursor: Option<&str>, which: &Endpoint) -> Served {
    {
        let mut f = s.faults.lock().unwrap();
        if f.remaining > 0 {
            f.remaining -= 1;
            let status = StatusCode::from_u16(f.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return Served::error(status, "injected failure");
        }
    }
    let mode = s.mode();
    if mode.is_restricted() {
        let admitted = s
            .gate
            .lock()
            .unwrap()
            .admit(client, mode.window_quota, mode.window(), Instant::now());
        if let Err(wait) = admitted {
            let mut r = Served::error(StatusCode::TOO_MANY_REQUESTS, "rate limit exceeded");
            r.headers.insert(header::RETRY_AFTER, HeaderValue::from(wait));
            return r;
        }
    }

    let Some(q) = q.filter(|q| !q.trim().is_empty()) else {
        return Served::error(StatusCode::BAD_REQUEST, "missing q");
    };
    let parsed = match parse_query_string(q) {
        Ok(p) => p,
        Err(e) => return Served::error(StatusCode::BAD_REQUEST, format!("bad query: {e}")),
    };
    let before = match (cursor.filter(|c| !c.is_empty()), which) {
        (None, Endpoint::Timeline) => return Served::error(StatusCode::BAD_REQUEST, "missing min_position"),
        (None, Endpoint::Search) => None,
        (Some(c), _) => match render::decode_cursor(q, c) {
            Ok(id) => Some(id),
            Err(e) => return Served::error(StatusCode::BAD_REQUEST, e.to_string()),
        },
    };

    let page = match s.visible(&mode, parsed.date_range) {
        None => Vec::new(),
        Some(window) => {
            let mut scoped = parsed.clone();
            scoped.date_range = window;
            let pred = Predicate::new(&scoped);
            s.corpus
                .in_range(window)
                .iter()
                .rev()
                .filter(|t| before.is_none_or(|b| t.id_num() < b))
                .filter(|t| pred.matches(t))
                .take(mode.page_size)
                .collect::<Vec<&MockTweet>>()
        }
    };
    let next = page.last().map(|t| render::encode_cursor(q, t.id_num()));
    let (body, content_type) = match which {
        Endpoint::Search => (render::search_page(&page, next.as_deref()), "text/html; charset=utf-8"),
        Endpoint::Timeline => (
            serde_json::json!({
                "items_html": render::items_html(&page),
                "min_position": next.clone().unwrap_or_default(),
                "has_more_items": !page.is_empty(),
            })
            .to_string(),
            "application/json",
        ),
    };
    Served {
        status: StatusCode::OK,
        headers: HeaderMap::new(),
        body,
        content_type,
        tweets: page.len(),
        next_cursor: next,
    }
}

async fn ledger(State(s): State<Arc<Shared>>) -> Json<Vec<LedgerEntry>> {
    Json(s.ledger.lock().unwrap().clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestInfo {
    pub digest: String,
    pub seed: u64,
    pub size: usize,
    pub range: DateRange,
}

async fn digest(State(s): State<Arc<Shared>>) -> Json<DigestInfo> {
    Json(DigestInfo {
        digest: s.corpus.digest().to_string(),
        seed: s.corpus.config().seed,
        size: s.corpus.len(),
        range: s.corpus.range(),
    })
}

async fn reset(State(s): State<Arc<Shared>>) -> Json<serde_json::Value> {
    s.reset();
    Json(serde_json::json!({"status": "ok"}))
}

#[derive(Debug, Deserialize)]
struct FaultParams {
    count: u32,
    #[serde(default = "default_fault_status")]
    status: u16,
}

fn default_fault_status() -> u16 {
    500
}

async fn faults(State(s): State<Arc<Shared>>, Query(p): Query<FaultParams>) -> Response {
    if StatusCode::from_u16(p.status).is_err() {
        return (StatusCode::BAD_REQUEST, "bad status").into_response();
    }
    *s.faults.lock().unwrap() = Faults {
        remaining: p.count,
        status: p.status,
    };
    Json(serde_json::json!({"status": "ok"})).into_response()
}

async fn get_mode(State(s): State<Arc<Shared>>) -> Json<ServerMode> {
    Json(s.mode())
}

async fn set_mode(State(s): State<Arc<Shared>>, Json(m): Json<ServerMode>) -> Response {
    match m.validate() {
        Ok(()) => {
            *s.mode.write().unwrap() = m;
            s.gate.lock().unwrap().clear();
            Json(m).into_response()
        }
        Err(e) => (StatusCode::BAD_REQUEST, e).into_response(),
    }
}

/// A running mock server.
pub struct MockHandle {
    shared: Arc<Shared>,
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<io::Result<()>>,
}

impl MockHandle {
    /// Bind `addr` (port 0 for an ephemeral port) and start serving.
    pub async fn spawn(corpus: Corpus, mode: ServerMode, addr: SocketAddr) -> io::Result<Self> {
        mode.validate()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        let listener = TcpListener::bind(addr).await?;
        Self::serve(listener, Arc::new(corpus), mode)
    }

    /// Start on an ephemeral loopback port.
    pub async fn local(corpus: Corpus, mode: ServerMode) -> io::Result<Self> {
        Self::spawn(corpus, mode, SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub fn serve(listener: TcpListener, corpus: Arc<Corpus>, mode: ServerMode) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared::new(corpus, mode));
        let app = router_with(Arc::clone(&shared));
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await
        });
        tracing::info!(%addr, "mock target listening");
        Ok(Self {
            shared,
            addr,
            stop: Some(stop),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn corpus(&self) -> &Corpus {
        &self.shared.corpus
    }

    pub fn digest(&self) -> &str {
        self.shared.corpus.digest()
    }

    pub fn mode(&self) -> ServerMode {
        self.shared.mode()
    }

    pub fn set_mode(&self, mode: ServerMode) -> Result<(), String> {
        mode.validate()?;
        *self.shared.mode.write().unwrap() = mode;
        self.shared.gate.lock().unwrap().clear();
        Ok(())
    }

    /// Answer the next `count` search requests with `status`.
    pub fn inject_failures(&self, count: u32, status: u16) {
        *self.shared.faults.lock().unwrap() = Faults {
            remaining: count,
            status,
        };
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.shared.ledger.lock().unwrap().clone()
    }

    /// Clear the ledger, rate state and pending faults.
    pub fn reset(&self) {
        self.shared.reset();
    }

    pub async fn shutdown(mut self) -> io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        (&mut self.task).await.map_err(io::Error::other)?
    }
}

impl Drop for MockHandle {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
    }
}
