//! Crawl job daemon: a FIFO queue, a bounded worker pool and a JSON HTTP API.

pub mod api;
pub mod config;
pub mod executor;
pub mod job;
pub mod scheduler;

pub use api::{router, serve, serve_on, DaemonHandle};
pub use config::DaemonConfig;
pub use executor::{CrawlExecutor, DataLayout, JobContext, JobExecutor, JobFuture, JobOutcome, Progress};
pub use job::{JobRecord, JobState, ScheduleRequest};
pub use scheduler::{CancelError, JobView, Limits, Listing, Scheduler, SubmitError};
