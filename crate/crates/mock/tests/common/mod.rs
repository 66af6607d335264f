#![allow(dead_code)]

use std::collections::BTreeSet;
use std::time::Duration;

use chrono::NaiveDate;
use chronoscrape_core::crawler::{CrawlConfig, Crawler, HttpTransport};
use chronoscrape_core::extract::Tweet;
use chronoscrape_core::query::{DateRange, QueryArguments, SearchEndpoints};
use chronoscrape_mock::corpus::{author_name, PLACES};
use chronoscrape_mock::{oracle, Corpus, MockHandle, DEFAULT_VOCABULARY};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn day(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

pub fn range(a: &str, b: &str) -> DateRange {
    DateRange::new(day(a), day(b))
}

pub fn fast_config() -> CrawlConfig {
    CrawlConfig {
        politeness_delay: Duration::ZERO,
        retry_backoff: Duration::from_millis(5),
        ..CrawlConfig::default()
    }
}

pub fn crawler(mock: &MockHandle, config: CrawlConfig) -> Crawler<HttpTransport> {
    Crawler::new(
        HttpTransport::new(),
        SearchEndpoints::new(&mock.base_url()).unwrap(),
        config,
    )
    .unwrap()
}

pub fn ids(tweets: &[Tweet]) -> BTreeSet<String> {
    tweets.iter().map(|t| t.id.clone()).collect()
}

pub fn oracle_ids(corpus: &Corpus, q: &QueryArguments) -> BTreeSet<String> {
    oracle(corpus, q).into_iter().map(|t| t.tweet.id.clone()).collect()
}

/// A random valid query over the default vocabulary and a sub-range of `within`.
pub fn random_query<R: Rng>(rng: &mut R, within: DateRange) -> QueryArguments {
    let days = within.num_days();
    let start = rng.gen_range(0..days);
    let len = rng.gen_range(0..(days - start).min(6));
    let since = within.since + chrono::Days::new(start);
    let mut q = QueryArguments::new(DateRange::new(since, since + chrono::Days::new(len)));
    let vocab = DEFAULT_VOCABULARY;
    match rng.gen_range(0..4) {
        0 => q.all_words = vec![vocab.choose(rng).unwrap().to_string()],
        1 => {
            q.any_words = vocab.choose_multiple(rng, 3).map(|w| w.to_string()).collect();
        }
        2 => q.hashtags = vec![vocab.choose(rng).unwrap().to_string()],
        _ => {
            q.all_words = vocab.choose_multiple(rng, 2).map(|w| w.to_string()).collect();
        }
    }
    if rng.gen_bool(0.3) {
        q.language = Some(["en", "es", "fr"].choose(rng).unwrap().to_string());
    }
    if rng.gen_bool(0.15) {
        q.near_place = Some(PLACES.choose(rng).unwrap().0.to_string());
        q.near_place_miles = Some(rng.gen_range(1..50));
    }
    if rng.gen_bool(0.1) {
        q.account = Some(author_name(rng.gen_range(0..40)));
    }
    if rng.gen_bool(0.2) {
        q.k_rounds = rng.gen_range(1..3);
    }
    q
}

/// Split ledger entries into pages that delivered new posts and terminal
/// fetches: empty responses, or a repeat of an already-served request.
pub fn content_and_terminal(ledger: &[chronoscrape_mock::LedgerEntry]) -> (usize, usize) {
    let mut seen = std::collections::HashSet::new();
    let mut content = 0;
    let mut terminal = 0;
    for e in ledger.iter().filter(|e| e.status == 200) {
        let fresh = seen.insert((e.path.clone(), e.q.clone(), e.cursor.clone()));
        if e.tweets > 0 && fresh {
            content += 1;
        } else {
            terminal += 1;
        }
    }
    (content, terminal)
}
