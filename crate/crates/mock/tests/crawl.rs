mod common;

use std::collections::BTreeSet;
use std::time::Duration;

use chronoscrape_core::crawler::{
    Checkpoint, CrawlConfig, CrawlError, CrawlObserver, CrawlOptions, Phase, RequestRecord,
};
use chronoscrape_core::extract::Tweet;
use chronoscrape_core::pipeline::{IngestPipeline, ItemStore, MemoryStore};
use chronoscrape_core::query::{DateRange, QueryArguments};
use chronoscrape_mock::{Corpus, CorpusConfig, MockHandle, ServerMode, SEARCH_PATH, TIMELINE_PATH};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trump(r: DateRange) -> QueryArguments {
    QueryArguments::new(r).with_all_words(["trump"])
}

#[tokio::test]
async fn randomized_queries_match_the_oracle() {
    let r = range("2017-10-01", "2017-10-20");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..12u64 {
        let corpus = Corpus::generate(CorpusConfig::new(seed, 600, r));
        let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
        let c = crawler(&mock, fast_config());
        for _ in 0..3 {
            let q = random_query(&mut rng, r);
            let mut out: Vec<Tweet> = Vec::new();
            let m = c.crawl(&q, &mut out).await.unwrap();
            assert_eq!(ids(&out), oracle_ids(mock.corpus(), &q), "seed {seed} query {q:?}");
            assert_eq!(m.requests_made, mock.ledger().len() as u64);
            mock.reset();
        }
    }
}

#[tokio::test]
async fn page_count_per_day() {
    for m in [0usize, 1, 19, 20, 21, 73] {
        let corpus = Corpus::generate(CorpusConfig::new(5, 200, range("2016-01-01", "2016-01-03")))
            .with_planted(day("2016-01-02"), m, "zzmark");
        let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
        let q = QueryArguments::new(DateRange::single(day("2016-01-02"))).with_all_words(["zzmark"]);
        let mut out: Vec<Tweet> = Vec::new();
        let metrics = crawler(&mock, fast_config()).crawl(&q, &mut out).await.unwrap();
        let ledger = mock.ledger();
        let (content, terminal) = content_and_terminal(&ledger);
        let phases_run = if m == 0 { 1 } else { 2 };
        assert_eq!(content, m.div_ceil(20), "M={m}");
        assert_eq!(terminal, phases_run, "M={m}");
        assert_eq!(metrics.pages_phase1 + metrics.pages_phase2, ledger.len() as u64);
        assert_eq!(out.len(), m);
    }
}

#[tokio::test]
async fn twenty_matches_end_on_has_more_false() {
    let corpus = Corpus::generate(CorpusConfig::new(5, 0, range("2016-01-02", "2016-01-02")))
        .with_planted(day("2016-01-02"), 20, "trump");
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    let mut out: Vec<Tweet> = Vec::new();
    let m = crawler(&mock, fast_config())
        .crawl(&trump(DateRange::single(day("2016-01-02"))), &mut out)
        .await
        .unwrap();
    assert_eq!((m.pages_phase1, m.pages_phase2), (2, 1));
    let ledger = mock.ledger();
    assert_eq!(ledger.last().unwrap().path, TIMELINE_PATH);
    assert_eq!(ledger.last().unwrap().tweets, 0);
}

#[tokio::test]
async fn table_two_query_dedupes_rounds() {
    let corpus = Corpus::generate(CorpusConfig::new(42, 500, range("2016-01-01", "2016-01-03")))
        .with_planted(day("2016-01-02"), 73, "trump");
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    let q = trump(DateRange::single(day("2016-01-02"))).with_k_rounds(4);
    let expected = oracle_ids(mock.corpus(), &q);
    let mut pipe = IngestPipeline::new(MemoryStore::default(), q.query_hash());
    let m = crawler(&mock, fast_config()).crawl(&q, &mut pipe).await.unwrap();
    assert_eq!(m.tweets_retrieved, 4 * expected.len() as u64);
    assert_eq!(pipe.store().len(), expected.len());
    assert_eq!(pipe.stats().duplicates, 3 * expected.len() as u64);
    assert_eq!(m.rounds, 4);
}

#[tokio::test]
async fn continuation_cursors_chain() {
    let corpus = Corpus::generate(CorpusConfig::new(1, 0, range("2016-01-02", "2016-01-02")))
        .with_planted(day("2016-01-02"), 200, "trump");
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    let mut out: Vec<Tweet> = Vec::new();
    crawler(&mock, fast_config())
        .crawl(&trump(DateRange::single(day("2016-01-02"))), &mut out)
        .await
        .unwrap();
    let ledger = mock.ledger();
    assert_eq!(content_and_terminal(&ledger), (10, 2));
    let mut prev = None;
    for e in &ledger {
        if e.path == TIMELINE_PATH {
            assert_eq!(e.cursor.as_deref(), prev.as_deref(), "seq {}", e.seq);
        }
        if e.next_cursor.is_some() {
            prev = e.next_cursor.clone();
        }
    }
    assert_eq!(out.len(), 200);
}

#[tokio::test]
async fn politeness_gap_is_respected() {
    let corpus = Corpus::generate(CorpusConfig::new(1, 0, range("2016-01-02", "2016-01-02")))
        .with_planted(day("2016-01-02"), 70, "trump");
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    let cfg = CrawlConfig {
        politeness_delay: Duration::from_millis(120),
        ..fast_config()
    };
    let mut out: Vec<Tweet> = Vec::new();
    crawler(&mock, cfg)
        .crawl(&trump(DateRange::single(day("2016-01-02"))), &mut out)
        .await
        .unwrap();
    let ledger = mock.ledger();
    assert!(ledger.len() >= 5);
    for w in ledger.windows(2) {
        let gap = w[1].mono_us - w[0].mono_us;
        assert!(gap + 50_000 >= 120_000, "gap {gap}us");
    }
}

#[tokio::test]
async fn range_equals_union_of_days() {
    let r = range("2017-10-09", "2017-10-19");
    let corpus = Corpus::generate(CorpusConfig::new(42, 2500, range("2017-10-01", "2017-10-30")));
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    let c = crawler(&mock, fast_config());
    let mut whole: Vec<Tweet> = Vec::new();
    let m = c.crawl(&trump(r), &mut whole).await.unwrap();
    assert_eq!(m.per_window.len(), 11);
    let mut union = BTreeSet::new();
    for d in r.days() {
        let mut part: Vec<Tweet> = Vec::new();
        c.crawl(&trump(DateRange::single(d)), &mut part).await.unwrap();
        union.extend(ids(&part));
    }
    assert_eq!(ids(&whole), union);
    assert_eq!(union, oracle_ids(mock.corpus(), &trump(r)));
}

#[tokio::test]
async fn transient_failures_are_retried() {
    let corpus = Corpus::generate(CorpusConfig::new(1, 0, range("2016-01-02", "2016-01-02")))
        .with_planted(day("2016-01-02"), 5, "trump");
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    mock.inject_failures(2, 500);
    let mut out: Vec<Tweet> = Vec::new();
    let m = crawler(&mock, fast_config())
        .crawl(&trump(DateRange::single(day("2016-01-02"))), &mut out)
        .await
        .unwrap();
    let first_page_attempts = mock.ledger().iter().take_while(|e| e.status != 200).count() + 1;
    assert_eq!(first_page_attempts, 3);
    assert_eq!(out.len(), 5);
    assert_eq!(m.requests_made, mock.ledger().len() as u64);
}

#[tokio::test]
async fn exhausted_retries_abort_with_checkpoint() {
    let corpus = Corpus::generate(CorpusConfig::new(1, 0, range("2016-01-02", "2016-01-02")))
        .with_planted(day("2016-01-02"), 5, "trump");
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    mock.inject_failures(100, 500);
    let mut out: Vec<Tweet> = Vec::new();
    let err = crawler(&mock, CrawlConfig { max_retries: 3, ..fast_config() })
        .crawl(&trump(DateRange::single(day("2016-01-02"))), &mut out)
        .await
        .unwrap_err();
    let CrawlError::Aborted { metrics, checkpoint, .. } = err else { panic!() };
    assert_eq!(metrics.requests_made, 4);
    assert_eq!(mock.ledger().len(), 4);
    assert_eq!((checkpoint.window_index, checkpoint.phase), (0, Phase::Primary));
}

#[tokio::test]
async fn resume_after_interruption_matches_full_run() {
    let r = range("2017-10-09", "2017-10-12");
    let corpus = Corpus::generate(CorpusConfig::new(42, 0, r))
        .with_planted(day("2017-10-10"), 45, "trump a")
        .with_planted(day("2017-10-11"), 33, "trump b")
        .with_planted(day("2017-10-12"), 8, "trump c");
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    let q = trump(r).with_k_rounds(2);
    let c = crawler(&mock, CrawlConfig { max_retries: 0, ..fast_config() });

    let mut full = IngestPipeline::new(MemoryStore::default(), q.query_hash());
    c.crawl(&q, &mut full).await.unwrap();
    let total = mock.ledger().len();
    mock.reset();

    for fail_at in 1..total {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("job.ckpt");
        let mut store = IngestPipeline::new(MemoryStore::default(), q.query_hash());
        mock.reset();
        // Let `fail_at` requests through, then fail the next one.
        struct Trip<'m>(usize, usize, &'m MockHandle);
        impl CrawlObserver for Trip<'_> {
            fn on_request(&mut self, _r: &RequestRecord) {
                self.0 += 1;
                if self.0 == self.1 {
                    self.2.inject_failures(1, 503);
                }
            }
        }
        let mut trip = Trip(0, fail_at, &mock);
        let first_err = c
            .crawl_with(
                &q,
                &mut store,
                CrawlOptions { checkpoint_path: Some(ck.clone()), observer: Some(&mut trip), ..Default::default() },
            )
            .await
            .err();
        let err = first_err.unwrap_or_else(|| panic!("no failure at {fail_at}"));
        assert!(matches!(err, CrawlError::Aborted { .. }));
        let saved = Checkpoint::load(&ck).unwrap().unwrap();
        c.crawl_with(
            &q,
            &mut store,
            CrawlOptions { resume: Some(saved), checkpoint_path: Some(ck.clone()), ..Default::default() },
        )
        .await
        .unwrap();
        let got: BTreeSet<String> = store.store().items().iter().map(|i| i.tweet.id.clone()).collect();
        let want: BTreeSet<String> = full.store().items().iter().map(|i| i.tweet.id.clone()).collect();
        assert_eq!(got, want, "interrupted after request {fail_at}");
    }
}

#[tokio::test]
async fn restricted_mode_serves_a_subset() {
    let r = range("2017-09-20", "2017-10-19");
    let corpus = Corpus::generate(CorpusConfig::new(42, 1500, r));
    let mock = MockHandle::local(corpus, ServerMode::scrape()).await.unwrap();
    let c = crawler(&mock, fast_config());
    let q = trump(r);
    let mut open: Vec<Tweet> = Vec::new();
    c.crawl(&q, &mut open).await.unwrap();
    mock.set_mode(ServerMode::restricted(1000, 1.0, 21)).unwrap();
    let mut capped: Vec<Tweet> = Vec::new();
    c.crawl(&q, &mut capped).await.unwrap();
    let (a, b) = (ids(&open), ids(&capped));
    assert!(b.is_subset(&a));
    assert!(b.len() < a.len());
    assert_eq!(a, oracle_ids(mock.corpus(), &q));
    assert!(mock.ledger().iter().all(|e| e.path == SEARCH_PATH || e.path == TIMELINE_PATH));
}

#[tokio::test]
async fn hundred_small_corpora_match_the_oracle() {
    let r = range("2016-03-01", "2016-03-05");
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for seed in 100..200u64 {
        let corpus = Corpus::generate(CorpusConfig::new(seed, 150, r));
        let mock = MockHandle::local(corpus, ServerMode { page_size: 7, ..ServerMode::scrape() })
            .await
            .unwrap();
        let q = random_query(&mut rng, r);
        let mut out: Vec<Tweet> = Vec::new();
        crawler(&mock, fast_config()).crawl(&q, &mut out).await.unwrap();
        assert_eq!(ids(&out), oracle_ids(mock.corpus(), &q), "seed {seed} query {q:?}");
        mock.shutdown().await.unwrap();
    }
}
