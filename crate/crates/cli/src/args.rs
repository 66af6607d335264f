use std::ffi::OsString;
use std::path::PathBuf;

use chronoscrape_core::pipeline::ExportFormat;
use chronoscrape_core::query::form;
use clap::{ArgAction, Args, Parser, Subcommand};

/// Short flags longer than one character, rewritten before parsing.
const MULTI_CHAR_SHORTS: [(&str, &str); 4] = [
    ("-aW", "--any-words"),
    ("-pF", "--account-from"),
    ("-pM", "--account-mention"),
    ("-gK", "--near-place-miles"),
];

/// Rewrite the two-letter short flags (`-aW`, `-pF`, `-pM`, `-gK`) and the
/// `-a key=value` form into long flags.
pub fn normalize_args<I, T>(args: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut out = Vec::new();
    let mut iter = args.into_iter().map(Into::into).peekable();
    while let Some(arg) = iter.next() {
        let Some(s) = arg.to_str() else {
            out.push(arg);
            continue;
        };
        if s == "--" {
            out.push(arg);
            out.extend(iter);
            break;
        }
        if s == "-a" {
            if let Some((key, value)) = iter.peek().and_then(|v| v.to_str()).and_then(|v| v.split_once('=')) {
                out.push(format!("--{}={value}", key.trim()).into());
                iter.next();
                continue;
            }
        }
        let rewritten = MULTI_CHAR_SHORTS.iter().find_map(|(short, long)| {
            if s == *short {
                Some(long.to_string())
            } else {
                s.strip_prefix(short).and_then(|rest| rest.strip_prefix('=')).map(|v| format!("{long}={v}"))
            }
        });
        out.push(rewritten.map_or(arg, OsString::from));
    }
    out
}

#[derive(Debug, Parser)]
#[command(name = "chronoscrape", version, about = "Deep-pagination crawler for historical posts")]
pub struct Cli {
    /// Log filter, e.g. `info` or `chronoscrape_core=debug`
    #[arg(long, global = true, env = "CHRONOSCRAPE_LOG", default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a crawl in this process and export the results
    Crawl(CrawlArgs),
    /// Submit a crawl job to a running daemon
    Schedule(ScheduleArgs),
    /// Run the job daemon
    Serve(ServeArgs),
    /// Run the mock search target
    Mock(MockArgs),
    /// Compare the restricted API strategy with scraping on a mock corpus
    Bench(BenchArgs),
}

/// Advanced search arguments. List values may repeat or be comma separated.
#[derive(Debug, Clone, Default, Args)]
pub struct QueryFlags {
    /// All of these words
    #[arg(short = 'w', long = "all-words", value_name = "WORDS", num_args = 1.., action = ArgAction::Append)]
    pub all_words: Vec<String>,
    /// Number of rounds for retrieving deeper tweets [default: 1]
    #[arg(short = 'k', long = "k-rounds", value_name = "INTEGER")]
    pub k_rounds: Option<String>,
    /// An exact phrase
    #[arg(short = 'e', long = "exact-phrase", value_name = "STRING")]
    pub exact_phrase: Option<String>,
    /// Any of these words [short: -aW]
    #[arg(long = "any-words", value_name = "WORDS", num_args = 1.., action = ArgAction::Append)]
    pub any_words: Vec<String>,
    /// These hashtags
    #[arg(short = 'h', long = "hashtag", value_name = "WORDS", num_args = 1.., action = ArgAction::Append)]
    pub hashtags: Vec<String>,
    /// ISO language code
    #[arg(short = 'l', long = "language", value_name = "ISO CODE")]
    pub language: Option<String>,
    /// Posts from this account
    #[arg(short = 'p', long = "account", value_name = "STRING")]
    pub account: Option<String>,
    /// Posts sent to this account [short: -pF]
    #[arg(long = "account-from", value_name = "STRING")]
    pub account_from: Option<String>,
    /// Posts mentioning this account [short: -pM]
    #[arg(long = "account-mention", value_name = "STRING")]
    pub account_mention: Option<String>,
    /// Posts near this place
    #[arg(short = 'g', long = "near-place", value_name = "STRING")]
    pub near_place: Option<String>,
    /// Radius around the place in miles [short: -gK] [default: 15]
    #[arg(long = "near-place-miles", value_name = "INTEGER")]
    pub near_place_miles: Option<String>,
    /// Inclusive date range
    #[arg(short = 'd', long = "date-range", value_name = "SINCE:UNTIL")]
    pub date_range: Option<String>,
}

impl QueryFlags {
    /// Form pairs keyed by the long argument names.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |key: &str, v: &String| out.push((key.to_string(), v.clone()));
        self.all_words.iter().for_each(|v| push(form::ALL_WORDS, v));
        self.k_rounds.iter().for_each(|v| push(form::K_ROUNDS, v));
        self.exact_phrase.iter().for_each(|v| push(form::EXACT_PHRASE, v));
        self.any_words.iter().for_each(|v| push(form::ANY_WORDS, v));
        self.hashtags.iter().for_each(|v| push(form::HASHTAG, v));
        self.language.iter().for_each(|v| push(form::LANGUAGE, v));
        self.account.iter().for_each(|v| push(form::ACCOUNT, v));
        self.account_from.iter().for_each(|v| push(form::ACCOUNT_FROM, v));
        self.account_mention.iter().for_each(|v| push(form::ACCOUNT_MENTION, v));
        self.near_place.iter().for_each(|v| push(form::NEAR_PLACE, v));
        self.near_place_miles.iter().for_each(|v| push(form::NEAR_PLACE_MILES, v));
        self.date_range.iter().for_each(|v| push(form::DATE_RANGE, v));
        out
    }
}

/// Crawl tuning shared by `crawl` and `schedule`.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningFlags {
    /// Search host to crawl
    #[arg(long = "base-url", env = "CHRONOSCRAPE_BASE_URL", value_name = "URL")]
    pub base_url: Option<String>,
    /// Pause between requests in milliseconds [default: 250]
    #[arg(long = "politeness-delay", value_name = "MS")]
    pub politeness_delay: Option<u64>,
    /// Retries per request after the first attempt [default: 3]
    #[arg(long = "max-retries", value_name = "N")]
    pub max_retries: Option<u32>,
    /// Base retry backoff in milliseconds [default: 500]
    #[arg(long = "retry-backoff", value_name = "MS")]
    pub retry_backoff: Option<u64>,
    /// Per-request timeout in milliseconds [default: 10000]
    #[arg(long = "request-timeout", value_name = "MS")]
    pub request_timeout: Option<u64>,
    /// User-Agent header
    #[arg(long = "user-agent", value_name = "STRING")]
    pub user_agent: Option<String>,
}

#[derive(Debug, Args)]
#[command(disable_help_flag = true)]
pub struct CrawlArgs {
    #[command(flatten)]
    pub query: QueryFlags,
    #[command(flatten)]
    pub tuning: TuningFlags,
    /// Export file
    #[arg(short = 'o', long, value_name = "PATH", default_value = "items.jsonl")]
    pub output: PathBuf,
    /// Export format: jsonl, csv or txt
    #[arg(short = 'f', long, value_name = "FORMAT", default_value = "jsonl", value_parser = parse_format)]
    pub format: ExportFormat,
    /// Checkpoint file; an existing checkpoint for the same query is resumed
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Item store kept between runs [default: next to the checkpoint]
    #[arg(long, value_name = "PATH")]
    pub store: Option<PathBuf>,
    /// Keep duplicate items
    #[arg(long = "no-dedupe")]
    pub no_dedupe: bool,
    /// Print help
    #[arg(long, action = ArgAction::Help)]
    pub help: Option<bool>,
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse()
}

#[derive(Debug, Args)]
#[command(disable_help_flag = true)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub query: QueryFlags,
    #[command(flatten)]
    pub tuning: TuningFlags,
    /// Daemon address
    #[arg(long = "daemon-url", env = "CHRONOSCRAPE_DAEMON", value_name = "URL", default_value = "http://127.0.0.1:6800")]
    pub daemon_url: String,
    /// Project name
    #[arg(long, default_value = "twitter_spider")]
    pub project: String,
    /// Spider name
    #[arg(long, default_value = "twitter")]
    pub spider: String,
    /// Print help
    #[arg(long, action = ArgAction::Help)]
    pub help: Option<bool>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Listen address
    #[arg(long)]
    pub bind: Option<std::net::IpAddr>,
    /// Listen port, 0 for an ephemeral one
    #[arg(long, env = "CHRONOSCRAPE_PORT")]
    pub port: Option<u16>,
    /// Directory for job records, logs, items and checkpoints
    #[arg(long = "data-dir", value_name = "PATH")]
    pub data_dir: Option<PathBuf>,
    /// Search host for jobs that do not name one
    #[arg(long = "base-url", value_name = "URL")]
    pub base_url: Option<String>,
    /// Jobs running at once
    #[arg(long = "max-jobs")]
    pub max_jobs: Option<usize>,
    /// Static console files served under /console/
    #[arg(long = "console-dir", value_name = "PATH")]
    pub console_dir: Option<PathBuf>,
    /// Allowed CORS origin [default: any]
    #[arg(long = "cors-origin")]
    pub cors_origin: Option<String>,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Tweets in the corpus
    #[arg(long, default_value_t = 5000)]
    pub size: usize,
    /// Corpus date range
    #[arg(long = "date-range", value_name = "SINCE:UNTIL", default_value = "2017-10-01:2017-10-30")]
    pub date_range: String,
    /// scrape or restricted
    #[arg(long, default_value = "scrape")]
    pub mode: String,
    /// Requests per window in restricted mode
    #[arg(long, default_value_t = 5)]
    pub quota: u32,
    /// Rate window length in seconds
    #[arg(long = "window-seconds", default_value_t = 10.0)]
    pub window_seconds: f64,
    /// Days of history visible in restricted mode
    #[arg(long = "history-cap", default_value_t = 21)]
    pub history_cap: u32,
    #[arg(long = "page-size", default_value_t = 20)]
    pub page_size: usize,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Listen port, 0 for an ephemeral one
    #[arg(long, default_value_t = 9900)]
    pub port: u16,
    /// Print the corpus digest and exit
    #[arg(long = "digest-only")]
    pub digest_only: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub size: usize,
    /// Days in the corpus
    #[arg(long, default_value_t = 30)]
    pub days: u64,
    /// Days covered by the unfiltered and filtered comparisons
    #[arg(long = "recent-days", default_value_t = 7)]
    pub recent_days: u64,
    #[arg(long = "history-cap", default_value_t = 21)]
    pub history_cap: u32,
    #[arg(long, default_value_t = 50)]
    pub quota: u32,
    #[arg(long = "window-seconds", default_value_t = 10.0)]
    pub window_seconds: f64,
    #[arg(long = "politeness-delay", value_name = "MS", default_value_t = 100)]
    pub politeness_delay: u64,
    /// text or csv
    #[arg(long, default_value = "text")]
    pub format: String,
    /// Write the report here instead of stdout
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}
