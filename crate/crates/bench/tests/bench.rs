use std::time::Duration;

use chronoscrape_bench::{
    api_crawl, compare, render_text, run_benchmark, BenchConfig, Comparison, Methodology, MockPair,
};
use chronoscrape_core::crawler::{CrawlConfig, HttpTransport};
use chronoscrape_core::query::{DateRange, QueryArguments, SearchEndpoints};
use chronoscrape_mock::{oracle, Corpus, CorpusConfig, ServerMode, DEFAULT_VOCABULARY};

fn quick() -> BenchConfig {
    BenchConfig {
        corpus_size: 900,
        window_quota: 1000,
        window_seconds: 1.0,
        scrape_politeness_ms: 0,
        ..BenchConfig::default()
    }
}

#[tokio::test]
async fn scrape_reaches_full_history_and_api_does_not() {
    let report = run_benchmark(&quick()).await.unwrap();
    assert_eq!(report.rows.len(), 6);
    for c in [Comparison::Unfiltered, Comparison::Filtered, Comparison::Historical] {
        let scrape = report.row(c, Methodology::Scrape).unwrap();
        let api = report.row(c, Methodology::Api).unwrap();
        assert_eq!(scrape.total_retrieved, scrape.expected, "{c:?}");
        assert!(api.total_retrieved <= api.expected);
        if c == Comparison::Historical {
            assert!(api.total_retrieved < scrape.total_retrieved);
        } else {
            assert_eq!(api.total_retrieved, api.expected, "{c:?}");
        }
    }
    assert_eq!(render_text(&report.rows).lines().count(), 7);
}

#[tokio::test]
async fn api_strategy_waits_out_rate_limits() {
    let range = DateRange::new("2017-10-01".parse().unwrap(), "2017-10-05".parse().unwrap());
    let corpus = Corpus::generate(CorpusConfig::new(3, 130, range));
    let mocks = MockPair::start(corpus, ServerMode::restricted(3, 1.0, 21)).await.unwrap();
    let mut q = QueryArguments::new(range);
    q.any_words = DEFAULT_VOCABULARY.iter().map(|w| w.to_string()).collect();
    let expected = oracle(mocks.corpus(), &q).len();
    assert_eq!(expected, 130);
    let cfg = CrawlConfig { politeness_delay: Duration::ZERO, ..CrawlConfig::default() };
    let endpoints = SearchEndpoints::new(&mocks.restricted.base_url()).unwrap();
    let run = api_crawl(&HttpTransport::new(), &endpoints, &q, "t", &cfg).await.unwrap();
    assert_eq!(run.ids.len(), 130);
    assert!(run.throttled > 0);
    assert_eq!(run.requests - run.throttled, 8);
    assert!(run.seconds >= 2.0);
}

#[tokio::test]
async fn zero_match_query_gives_zero_rows() {
    let range = DateRange::new("2017-10-01".parse().unwrap(), "2017-10-03".parse().unwrap());
    let corpus = Corpus::generate(CorpusConfig::new(5, 60, range));
    let mocks = MockPair::start(corpus, ServerMode::restricted(100, 1.0, 21)).await.unwrap();
    let q = QueryArguments::new(range).with_all_words(["zzzznotaword"]);
    let cfg = CrawlConfig { politeness_delay: Duration::ZERO, ..CrawlConfig::default() };
    let rows = compare(&mocks, Comparison::Filtered, &q, &cfg, "z").await.unwrap();
    for r in &rows {
        assert_eq!((r.total_retrieved, r.expected), (0, 0));
    }
    assert_eq!(render_text(&rows).lines().count(), 3);
}

#[tokio::test]
async fn same_seed_same_counts() {
    let a = run_benchmark(&quick()).await.unwrap();
    let b = run_benchmark(&quick()).await.unwrap();
    assert_eq!(a.corpus_digest, b.corpus_digest);
    let counts = |r: &chronoscrape_bench::BenchReport| r.rows.iter().map(|x| (x.total_retrieved, x.requests)).collect::<Vec<_>>();
    assert_eq!(counts(&a), counts(&b));
}
