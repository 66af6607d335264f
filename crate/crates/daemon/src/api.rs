//! HTTP interface of the daemon.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Form, Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_util::sync::CancellationToken;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::config::DaemonConfig;
use crate::executor::{DataLayout, JobExecutor};
use crate::job::parse_schedule_form;
use crate::scheduler::{items_head, CancelError, Limits, Scheduler, SubmitError};

type Shared = Arc<Scheduler>;

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"status": "error", "message": message.into()}))).into_response()
}

async fn schedule(State(s): State<Shared>, Form(pairs): Form<Vec<(String, String)>>) -> Response {
    let req = match parse_schedule_form(&pairs) {
        Ok(r) => r,
        Err(violations) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({
                    "status": "error",
                    "message": violations.join("; "),
                    "violations": violations,
                })),
            )
                .into_response()
        }
    };
    match s.submit(req) {
        Ok(id) => Json(json!({"status": "ok", "jobid": id})).into_response(),
        Err(e @ SubmitError::QueueFull(_)) => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Deserialize)]
struct ProjectFilter {
    project: Option<String>,
}

async fn listjobs(State(s): State<Shared>, Query(f): Query<ProjectFilter>) -> Json<Value> {
    let listing = s.list(f.project.as_deref());
    let mut v = serde_json::to_value(listing).expect("listing serializes");
    v["status"] = json!("ok");
    Json(v)
}

#[derive(Deserialize)]
struct CancelForm {
    job: String,
}

async fn cancel(State(s): State<Shared>, Form(f): Form<CancelForm>) -> Response {
    match s.cancel(&f.job) {
        Ok(prev) => Json(json!({"status": "ok", "prevstate": prev})).into_response(),
        Err(e @ CancelError::Unknown(_)) => error(StatusCode::NOT_FOUND, e.to_string()),
        Err(e @ CancelError::AlreadyTerminal { .. }) => error(StatusCode::CONFLICT, e.to_string()),
    }
}

#[derive(Deserialize)]
struct Tail {
    tail: Option<usize>,
}

async fn logs(State(s): State<Shared>, Path(id): Path<String>, Query(t): Query<Tail>) -> Response {
    match s.log(&id, t.tail) {
        None => error(StatusCode::NOT_FOUND, format!("unknown job {id:?}")),
        Some(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Some(Ok(text)) => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response(),
    }
}

#[derive(Deserialize)]
struct Head {
    head: Option<usize>,
}

async fn items(State(s): State<Shared>, Path(id): Path<String>, Query(h): Query<Head>) -> Response {
    if s.get(&id).is_none() {
        return error(StatusCode::NOT_FOUND, format!("unknown job {id:?}"));
    }
    match items_head(&s.layout().items(&id), h.head) {
        Ok(text) => ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn status(State(s): State<Shared>) -> Json<Value> {
    let (pending, running, finished) = s.counts();
    Json(json!({
        "status": "ok",
        "pending": pending,
        "running": running,
        "finished": finished,
        "active_workers": s.active(),
        "max_concurrent_jobs": s.limits().max_concurrent_jobs,
    }))
}

/// Routes of the daemon, without static files.
pub fn router(scheduler: Shared, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/schedule.json", post(schedule))
        .route("/listjobs.json", get(listjobs))
        .route("/cancel.json", post(cancel))
        .route("/daemonstatus.json", get(status))
        .route("/logs/{job_id}", get(logs))
        .route("/items/{job_id}", get(items))
        .layer(cors)
        .with_state(scheduler)
}

/// A running daemon.
pub struct DaemonHandle {
    addr: SocketAddr,
    scheduler: Shared,
    stop: CancellationToken,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl DaemonHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn scheduler(&self) -> &Shared {
        &self.scheduler
    }

    /// Wait until the server stops on its own (it only does on error).
    pub async fn wait(self) -> std::io::Result<()> {
        self.task.await.map_err(std::io::Error::other)?
    }

    /// Stop accepting requests and interrupt running jobs.
    pub async fn shutdown(self) -> std::io::Result<()> {
        self.stop.cancel();
        self.scheduler.shutdown().await;
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Bind the configured address and start serving.
pub async fn serve(config: &DaemonConfig, executor: Arc<dyn JobExecutor>) -> std::io::Result<DaemonHandle> {
    let listener = TcpListener::bind(config.listen_addr()).await?;
    serve_on(listener, config, executor).await
}

pub async fn serve_on(
    listener: TcpListener,
    config: &DaemonConfig,
    executor: Arc<dyn JobExecutor>,
) -> std::io::Result<DaemonHandle> {
    let limits = Limits {
        max_concurrent_jobs: config.max_concurrent_jobs,
        max_pending: config.max_pending,
    };
    let scheduler = Scheduler::open(limits, DataLayout::new(&config.data_dir), executor)?;
    let mut app = router(Arc::clone(&scheduler), config.cors_origin.as_deref());
    if let Some(dir) = &config.console_dir {
        app = app.nest_service("/console", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    let addr = listener.local_addr()?;
    let stop = CancellationToken::new();
    let signal = stop.clone();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move { signal.cancelled().await })
            .await
    });
    tracing::info!(%addr, "daemon listening");
    Ok(DaemonHandle { addr, scheduler, stop, task })
}
