//! Job queue and worker pool.
//!
//! One mutex guards every job record, the FIFO queue and the set of active
//! workers, so state changes are serialized. At most `max_concurrent_jobs`
//! workers exist at any time; a cancelled job keeps its slot until its crawl
//! has actually stopped.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io;
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::Utc;
use serde::Serialize;
use tokio::sync::Notify;
use tokio_util::sync::CancellationToken;

use crate::executor::{DataLayout, JobContext, JobExecutor, JobOutcome, Progress};
use crate::job::{JobRecord, JobState, ScheduleRequest};

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("queue is full ({0} pending jobs)")]
    QueueFull(usize),
    #[error("cannot persist job: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CancelError {
    #[error("unknown job {0:?}")]
    Unknown(String),
    #[error("job {id} is already {state}")]
    AlreadyTerminal { id: String, state: JobState },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_concurrent_jobs: usize,
    pub max_pending: usize,
}

struct Active {
    cancel: CancellationToken,
    progress: Arc<Progress>,
}

#[derive(Default)]
struct Inner {
    jobs: BTreeMap<String, JobRecord>,
    queue: VecDeque<String>,
    active: HashMap<String, Active>,
    next_seq: u64,
    peak_running: usize,
    stopping: bool,
}

impl Inner {
    fn running(&self) -> usize {
        self.jobs.values().filter(|j| j.state == JobState::Running).count()
    }
}

/// One job as reported by the API.
#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub id: String,
    #[serde(flatten)]
    pub record: JobRecord,
    /// Tweets emitted so far while the job is running.
    pub tweets_so_far: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Listing {
    pub pending: Vec<JobView>,
    pub running: Vec<JobView>,
    /// Every terminal job: finished, failed or cancelled.
    pub finished: Vec<JobView>,
}

pub struct Scheduler {
    inner: Mutex<Inner>,
    limits: Limits,
    layout: DataLayout,
    executor: Arc<dyn JobExecutor>,
    changed: Notify,
}

impl Scheduler {
    /// Open the data directory, recover persisted jobs and start queued ones.
    ///
    /// Jobs that were running when the daemon stopped become failed; pending
    /// jobs are queued again in submission order.
    pub fn open(limits: Limits, layout: DataLayout, executor: Arc<dyn JobExecutor>) -> io::Result<Arc<Self>> {
        layout.create()?;
        let mut inner = Inner::default();
        let mut pending = Vec::new();
        for entry in fs::read_dir(layout.jobs_dir())? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let mut rec: JobRecord = match serde_json::from_str(&text) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(path = %path.display(), error = %e, "skipping unreadable job record");
                    continue;
                }
            };
            if rec.state == JobState::Running {
                rec.transition(JobState::Failed, Utc::now()).expect("running can fail");
                rec.error = Some("daemon restarted while the job was running".into());
                persist(&layout, &rec)?;
            }
            if rec.state == JobState::Pending {
                pending.push((rec.seq, rec.job_id.clone()));
            }
            inner.next_seq = inner.next_seq.max(rec.seq + 1);
            inner.jobs.insert(rec.job_id.clone(), rec);
        }
        pending.sort();
        inner.queue = pending.into_iter().map(|(_, id)| id).collect();

        let this = Arc::new(Self {
            inner: Mutex::new(inner),
            limits,
            layout,
            executor,
            changed: Notify::new(),
        });
        this.dispatch();
        Ok(this)
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn layout(&self) -> &DataLayout {
        &self.layout
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn submit(self: &Arc<Self>, req: ScheduleRequest) -> Result<String, SubmitError> {
        let id = {
            let mut inner = self.lock();
            if inner.queue.len() >= self.limits.max_pending {
                return Err(SubmitError::QueueFull(inner.queue.len()));
            }
            let id = uuid::Uuid::new_v4().simple().to_string();
            let rec = JobRecord {
                job_id: id.clone(),
                seq: inner.next_seq,
                project: req.project,
                spider: req.spider,
                parameters: req.parameters,
                state: JobState::Pending,
                submitted_at: Utc::now(),
                started_at: None,
                ended_at: None,
                log_path: self.layout.log(&id),
                metrics: None,
                items: None,
                error: None,
            };
            persist(&self.layout, &rec)?;
            inner.next_seq += 1;
            inner.jobs.insert(id.clone(), rec);
            inner.queue.push_back(id.clone());
            id
        };
        tracing::info!(job = %id, "job scheduled");
        self.dispatch();
        Ok(id)
    }

    /// Start queued jobs while worker slots are free.
    fn dispatch(self: &Arc<Self>) {
        let mut inner = self.lock();
        while !inner.stopping && inner.active.len() < self.limits.max_concurrent_jobs {
            let Some(id) = inner.queue.pop_front() else { break };
            let rec = inner.jobs.get_mut(&id).expect("queued job exists");
            if rec.transition(JobState::Running, Utc::now()).is_err() {
                continue;
            }
            let rec = rec.clone();
            if let Err(e) = persist(&self.layout, &rec) {
                tracing::warn!(job = %id, error = %e, "cannot persist job record");
            }
            let cancel = CancellationToken::new();
            let progress = Arc::new(Progress::default());
            inner.active.insert(
                id.clone(),
                Active {
                    cancel: cancel.clone(),
                    progress: Arc::clone(&progress),
                },
            );
            let running = inner.running();
            inner.peak_running = inner.peak_running.max(running);

            let ctx = JobContext {
                log_path: self.layout.log(&id),
                items_path: self.layout.items(&id),
                checkpoint_path: self.layout.checkpoint(&id),
                record: rec,
                cancel,
                progress,
            };
            let fut = self.executor.run(ctx);
            let this = Arc::clone(self);
            tracing::info!(job = %id, "job started");
            tokio::spawn(async move {
                let outcome = fut.await;
                this.complete(&id, outcome);
            });
        }
        drop(inner);
        self.changed.notify_waiters();
    }

    fn complete(self: &Arc<Self>, id: &str, outcome: JobOutcome) {
        {
            let mut inner = self.lock();
            inner.active.remove(id);
            let stopping = inner.stopping;
            let Some(rec) = inner.jobs.get_mut(id) else { return };
            let now = Utc::now();
            let (metrics, items) = match outcome {
                JobOutcome::Finished { metrics, items } => {
                    if rec.state == JobState::Running {
                        let _ = rec.transition(JobState::Finished, now);
                    }
                    (Some(metrics), Some(items))
                }
                JobOutcome::Failed { error, metrics, items } => {
                    if rec.state == JobState::Running {
                        let _ = rec.transition(JobState::Failed, now);
                        rec.error = Some(error);
                    }
                    (metrics, items)
                }
                JobOutcome::Cancelled { metrics, items } => {
                    if rec.state == JobState::Running {
                        let next = if stopping { JobState::Failed } else { JobState::Cancelled };
                        let _ = rec.transition(next, now);
                        if stopping {
                            rec.error = Some("daemon stopped while the job was running".into());
                        }
                    }
                    (metrics, items)
                }
            };
            rec.metrics = metrics.or(rec.metrics.take());
            rec.items = items.or(rec.items);
            if let Err(e) = persist(&self.layout, rec) {
                tracing::warn!(job = %id, error = %e, "cannot persist job record");
            }
            tracing::info!(job = %id, state = %rec.state, "job ended");
        }
        self.dispatch();
    }

    /// Cancel a job and return the state it had.
    pub fn cancel(&self, id: &str) -> Result<JobState, CancelError> {
        let mut inner = self.lock();
        let Some(rec) = inner.jobs.get_mut(id) else {
            return Err(CancelError::Unknown(id.to_string()));
        };
        let prev = rec.state;
        if prev.is_terminal() {
            return Err(CancelError::AlreadyTerminal { id: id.to_string(), state: prev });
        }
        rec.transition(JobState::Cancelled, Utc::now()).expect("non-terminal can be cancelled");
        if let Err(e) = persist(&self.layout, rec) {
            tracing::warn!(job = %id, error = %e, "cannot persist job record");
        }
        match prev {
            JobState::Pending => inner.queue.retain(|q| q != id),
            _ => {
                if let Some(a) = inner.active.get(id) {
                    a.cancel.cancel();
                }
            }
        }
        drop(inner);
        self.changed.notify_waiters();
        Ok(prev)
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.lock().jobs.get(id).cloned()
    }

    /// Consistent snapshot of all jobs, optionally for one project, each
    /// group in submission order.
    pub fn list(&self, project: Option<&str>) -> Listing {
        let inner = self.lock();
        let mut jobs: Vec<&JobRecord> = inner
            .jobs
            .values()
            .filter(|j| project.is_none_or(|p| j.project == p))
            .collect();
        jobs.sort_by_key(|j| j.seq);
        let view = |j: &JobRecord| JobView {
            id: j.job_id.clone(),
            record: j.clone(),
            tweets_so_far: inner.active.get(&j.job_id).map(|a| a.progress.tweets()),
        };
        let group = |s: &dyn Fn(JobState) -> bool| jobs.iter().filter(|j| s(j.state)).map(|j| view(j)).collect();
        Listing {
            pending: group(&|s| s == JobState::Pending),
            running: group(&|s| s == JobState::Running),
            finished: group(&|s| s.is_terminal()),
        }
    }

    /// Log text of a job; `tail` keeps the last lines only.
    pub fn log(&self, id: &str, tail: Option<usize>) -> Option<io::Result<String>> {
        self.get(id)?;
        let text = match fs::read_to_string(self.layout.log(id)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Some(Err(e)),
        };
        Some(Ok(match tail {
            None => text,
            Some(n) => {
                let lines: Vec<&str> = text.lines().collect();
                let mut out = lines[lines.len().saturating_sub(n)..].join("\n");
                if !out.is_empty() {
                    out.push('\n');
                }
                out
            }
        }))
    }

    /// Highest number of jobs seen in the running state at once.
    pub fn peak_running(&self) -> usize {
        self.lock().peak_running
    }

    /// Workers currently executing, including cancelled jobs still stopping.
    pub fn active(&self) -> usize {
        self.lock().active.len()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let inner = self.lock();
        let running = inner.running();
        let pending = inner.queue.len();
        (pending, running, inner.jobs.len() - pending - running)
    }

    /// Wait until no job is queued or executing.
    pub async fn wait_idle(&self) {
        loop {
            let notified = self.changed.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            {
                let inner = self.lock();
                if inner.queue.is_empty() && inner.active.is_empty() {
                    return;
                }
            }
            notified.await;
        }
    }

    /// Stop starting jobs and interrupt the running ones; they end as failed.
    pub async fn shutdown(&self) {
        {
            let mut inner = self.lock();
            inner.stopping = true;
            for a in inner.active.values() {
                a.cancel.cancel();
            }
        }
        loop {
            let notified = self.changed.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            if self.lock().active.is_empty() {
                return;
            }
            notified.await;
        }
    }
}

fn persist(layout: &DataLayout, rec: &JobRecord) -> io::Result<()> {
    let path = layout.job_file(&rec.job_id);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(rec).map_err(io::Error::other)?)?;
    fs::rename(&tmp, &path)
}

/// Items stored so far by a job, newest first, as export JSONL lines.
///
/// A line still being written by a running job is skipped.
pub fn items_head(path: &std::path::Path, head: Option<usize>) -> io::Result<String> {
    use chronoscrape_core::pipeline::{sorted_for_export, ExportRecord, StoredItem};
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(String::new()),
        Err(e) => return Err(e),
    };
    let items: Vec<StoredItem> = text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
    let mut out = String::new();
    for item in sorted_for_export(&items).into_iter().take(head.unwrap_or(usize::MAX)) {
        out.push_str(&serde_json::to_string(&ExportRecord::from(item)).map_err(io::Error::other)?);
        out.push('\n');
    }
    Ok(out)
}
