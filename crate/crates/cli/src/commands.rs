use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chronoscrape_bench::{render_text, run_benchmark, write_csv, BenchConfig};
use chronoscrape_core::crawler::{
    AbortCause, Checkpoint, CrawlConfig, CrawlError, CrawlMetrics, CrawlOptions, Crawler, HttpTransport,
};
use chronoscrape_core::pipeline::{write_export, FileStore, IngestPipeline, ItemStore, MemoryStore};
use chronoscrape_core::query::form::query_from_pairs;
use chronoscrape_core::query::{DateRange, QueryArguments, SearchEndpoints};
use chronoscrape_daemon::job::{self, CrawlOverrides};
use chronoscrape_daemon::{CrawlExecutor, DaemonConfig};
use chronoscrape_mock::{Corpus, CorpusConfig, MockHandle, ModeKind, ServerMode};
use tokio_util::sync::CancellationToken;

use crate::args::{BenchArgs, Cli, Command, CrawlArgs, MockArgs, ScheduleArgs, ServeArgs, TuningFlags};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;
pub const EXIT_UNREACHABLE: i32 = 4;
pub const EXIT_INTERRUPTED: i32 = 130;

pub const DEFAULT_BASE_URL: &str = "http://127.0.0.1:9900";

pub async fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Crawl(a) => crawl(a).await,
        Command::Schedule(a) => schedule(a).await,
        Command::Serve(a) => serve(a).await,
        Command::Mock(a) => mock(a).await,
        Command::Bench(a) => bench(a).await,
    }
}

fn overrides(t: &TuningFlags) -> CrawlOverrides {
    CrawlOverrides {
        base_url: t.base_url.clone(),
        politeness_delay_ms: t.politeness_delay,
        max_retries: t.max_retries,
        retry_backoff_ms: t.retry_backoff,
        request_timeout_ms: t.request_timeout,
        user_agent: t.user_agent.clone(),
    }
}

fn cancel_on_interrupt() -> CancellationToken {
    let token = CancellationToken::new();
    let t = token.clone();
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            t.cancel();
        }
    });
    token
}

async fn crawl(args: CrawlArgs) -> i32 {
    let q = match query_from_pairs(args.query.to_pairs()) {
        Ok(q) => q,
        Err(v) => {
            for m in v.messages() {
                eprintln!("error: {m}");
            }
            return EXIT_INVALID;
        }
    };
    let base = args.tuning.base_url.clone().unwrap_or_else(|| DEFAULT_BASE_URL.into());
    let endpoints = match SearchEndpoints::new(&base) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: base-url {base:?}: {e}");
            return EXIT_INVALID;
        }
    };
    let config = overrides(&args.tuning).apply(CrawlConfig::default());
    let crawler = match Crawler::new(HttpTransport::new(), endpoints, config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };

    let store_path = args
        .store
        .clone()
        .or_else(|| args.checkpoint.as_ref().map(|c| c.with_extension("store.jsonl")));
    match store_path {
        Some(path) => match FileStore::open(&path) {
            Ok(store) => run_crawl(&crawler, &q, store, &args).await,
            Err(e) => {
                eprintln!("error: store {}: {e}", path.display());
                EXIT_FAILURE
            }
        },
        None => run_crawl(&crawler, &q, MemoryStore::default(), &args).await,
    }
}

async fn run_crawl<S: ItemStore + Send>(
    crawler: &Crawler<HttpTransport>,
    q: &QueryArguments,
    store: S,
    args: &CrawlArgs,
) -> i32 {
    let resume = match &args.checkpoint {
        None => None,
        Some(path) => match Checkpoint::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_FAILURE;
            }
        },
    };
    if let Some(c) = &resume {
        eprintln!("resuming from window {} phase {}", c.window_index, c.phase);
    }
    let mut pipe = IngestPipeline::new(store, q.query_hash()).with_dedupe(!args.no_dedupe);
    let result = crawler
        .crawl_with(
            q,
            &mut pipe,
            CrawlOptions {
                resume,
                checkpoint_path: args.checkpoint.clone(),
                cancel: cancel_on_interrupt(),
                observer: None,
            },
        )
        .await;
    let code = match &result {
        Ok(m) => {
            print_metrics(m);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(m) = e.metrics() {
                print_metrics(m);
            }
            exit_code_for(e)
        }
    };
    match write_export(pipe.store(), &args.output, args.format) {
        Ok(n) => eprintln!("wrote {n} items to {}", args.output.display()),
        Err(e) => {
            eprintln!("error: export to {}: {e}", args.output.display());
            return EXIT_FAILURE;
        }
    }
    code
}

fn exit_code_for(e: &CrawlError) -> i32 {
    match e {
        CrawlError::InvalidQuery(_) | CrawlError::InvalidConfig(_) | CrawlError::CheckpointMismatch(_) => EXIT_INVALID,
        _ if e.is_cancelled() => EXIT_INTERRUPTED,
        CrawlError::Aborted { cause: AbortCause::Fetch(_), .. } => EXIT_TRANSPORT,
        CrawlError::Aborted { .. } => EXIT_FAILURE,
    }
}

fn print_metrics(m: &CrawlMetrics) {
    println!("{}", serde_json::to_string_pretty(m).expect("metrics serialize"));
}

async fn schedule(args: ScheduleArgs) -> i32 {
    let mut form = vec![("project".to_string(), args.project.clone()), ("spider".to_string(), args.spider.clone())];
    form.extend(args.query.to_pairs());
    let t = &args.tuning;
    let mut add = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            form.push((k.to_string(), v));
        }
    };
    add(job::BASE_URL, t.base_url.clone());
    add(job::POLITENESS_DELAY, t.politeness_delay.map(|v| v.to_string()));
    add(job::MAX_RETRIES, t.max_retries.map(|v| v.to_string()));
    add(job::RETRY_BACKOFF, t.retry_backoff.map(|v| v.to_string()));
    add(job::REQUEST_TIMEOUT, t.request_timeout.map(|v| v.to_string()));
    add(job::USER_AGENT, t.user_agent.clone());

    let url = format!("{}/schedule.json", args.daemon_url.trim_end_matches('/'));
    let resp = match reqwest::Client::new().post(&url).form(&form).send().await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: daemon unreachable at {}: {e}", args.daemon_url);
            return EXIT_UNREACHABLE;
        }
    };
    let status = resp.status();
    let body: serde_json::Value = match resp.text().await.map(|t| serde_json::from_str(&t)) {
        Ok(Ok(v)) => v,
        _ => {
            eprintln!("error: daemon answered {status} with an unreadable body");
            return EXIT_FAILURE;
        }
    };
    if status.is_success() {
        match body["jobid"].as_str() {
            Some(id) => {
                println!("{id}");
                EXIT_OK
            }
            None => {
                eprintln!("error: daemon reply has no jobid: {body}");
                EXIT_FAILURE
            }
        }
    } else if status.as_u16() == 400 {
        match body["violations"].as_array() {
            Some(list) => list.iter().filter_map(|v| v.as_str()).for_each(|v| eprintln!("error: {v}")),
            None => eprintln!("error: {}", body["message"]),
        }
        EXIT_INVALID
    } else {
        eprintln!("error: daemon answered {status}: {}", body["message"]);
        EXIT_FAILURE
    }
}

fn load_daemon_config(args: &ServeArgs) -> Result<DaemonConfig, String> {
    let mut c = match &args.config {
        Some(p) => DaemonConfig::load(p).map_err(|e| e.to_string())?,
        None => DaemonConfig::default(),
    };
    if let Some(b) = args.bind {
        c.bind = b;
    }
    if let Some(p) = args.port {
        c.port = p;
    }
    if let Some(d) = &args.data_dir {
        c.data_dir = d.clone();
    }
    if let Some(u) = &args.base_url {
        c.base_url = u.trim_end_matches('/').to_string();
    }
    if let Some(n) = args.max_jobs {
        c.max_concurrent_jobs = n;
    }
    if let Some(d) = &args.console_dir {
        c.console_dir = Some(d.clone());
    }
    if let Some(o) = &args.cors_origin {
        c.cors_origin = Some(o.clone());
    }
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

async fn serve(args: ServeArgs) -> i32 {
    let config = match load_daemon_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let executor = Arc::new(CrawlExecutor::new(config.base_url.clone(), CrawlConfig::default()));
    let handle = match chronoscrape_daemon::serve(&config, executor).await {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: cannot listen on {}: {e}", config.listen_addr());
            return EXIT_FAILURE;
        }
    };
    announce(&format!("daemon listening on {}", handle.base_url()));
    let _ = tokio::signal::ctrl_c().await;
    eprintln!("shutting down");
    match handle.shutdown().await {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn announce(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

async fn mock(args: MockArgs) -> i32 {
    let range: DateRange = match args.date_range.parse() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: date-range: {e}");
            return EXIT_INVALID;
        }
    };
    let kind: ModeKind = match args.mode.parse() {
        Ok(k) => k,
        Err(e) => {
            eprintln!("error: mode: {e}");
            return EXIT_INVALID;
        }
    };
    let mode = ServerMode {
        mode: kind,
        page_size: args.page_size,
        window_quota: args.quota,
        window_seconds: args.window_seconds,
        history_cap_days: args.history_cap,
    };
    if let Err(e) = mode.validate() {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    let corpus = Corpus::generate(CorpusConfig::new(args.seed, args.size, range));
    announce(&format!("corpus digest {} ({} tweets, seed {}, {})", corpus.digest(), corpus.len(), args.seed, range));
    if args.digest_only {
        return EXIT_OK;
    }
    let handle = match MockHandle::spawn(corpus, mode, (args.bind, args.port).into()).await {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: cannot listen on {}:{}: {e}", args.bind, args.port);
            return EXIT_FAILURE;
        }
    };
    announce(&format!("mock target listening on {}", handle.base_url()));
    let _ = tokio::signal::ctrl_c().await;
    match handle.shutdown().await {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

async fn bench(args: BenchArgs) -> i32 {
    let config = BenchConfig {
        seed: args.seed,
        corpus_size: args.size,
        corpus_days: args.days,
        recent_days: args.recent_days,
        history_cap_days: args.history_cap,
        window_quota: args.quota,
        window_seconds: args.window_seconds,
        scrape_politeness_ms: args.politeness_delay,
        ..BenchConfig::default()
    };
    if !matches!(args.format.as_str(), "text" | "csv") {
        eprintln!("error: unknown format {:?}, expected text or csv", args.format);
        return EXIT_INVALID;
    }
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    let report = match run_benchmark(&config).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    eprintln!("corpus digest {}", report.corpus_digest);
    let mut text = Vec::new();
    if args.format == "csv" {
        if let Err(e) = write_csv(&report.rows, &mut text) {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    } else {
        text = render_text(&report.rows).into_bytes();
    }
    match &args.out {
        Some(path) => write_file(path, &text),
        None => {
            let _ = std::io::stdout().write_all(&text);
            EXIT_OK
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> i32 {
    match std::fs::write(path, bytes) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}: {e}", PathBuf::from(path).display());
            EXIT_FAILURE
        }
    }
}
