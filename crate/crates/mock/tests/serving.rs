mod common;

use std::collections::BTreeSet;

use chronoscrape_core::extract::{extract_page, extract_tweets, parse_continuation, Tweet};
use chronoscrape_core::query::{compose_query_string, DateRange, QueryArguments};
use chronoscrape_mock::{oracle, Corpus, CorpusConfig, LedgerEntry, MockHandle, ServerMode};
use common::{day, range};

fn planted(m: usize) -> Corpus {
    Corpus::generate(CorpusConfig::new(42, 400, range("2016-01-01", "2016-01-03")))
        .with_planted(day("2016-01-02"), m, "zzmark trump rally")
}

fn q_text(words: &[&str], window: DateRange) -> String {
    let q = QueryArguments::new(window).with_all_words(words.iter().copied());
    compose_query_string(&q, window).unwrap()
}

async fn get(client: &reqwest::Client, base: &str, path: &str, params: &[(&str, &str)]) -> reqwest::Response {
    client.get(format!("{base}{path}")).query(params).send().await.unwrap()
}

#[tokio::test]
async fn first_page_has_twenty_and_a_cursor() {
    let mock = MockHandle::local(planted(73), ServerMode::scrape()).await.unwrap();
    let c = reqwest::Client::new();
    let q = q_text(&["zzmark"], DateRange::single(day("2016-01-02")));
    let body = get(&c, &mock.base_url(), "/search", &[("q", &q)]).await.text().await.unwrap();
    let page = extract_page(&body).unwrap();
    assert_eq!(page.tweets.len(), 20);
    assert!(!page.cursor.is_exhausted());

    let want: Vec<Tweet> = oracle(mock.corpus(), &chronoscrape_core::query::parse_query_string(&q).unwrap())
        .into_iter()
        .take(20)
        .map(|t| t.tweet.clone())
        .collect();
    assert_eq!(page.tweets, want);
}

#[tokio::test]
async fn empty_day_has_no_cursor() {
    let mock = MockHandle::local(planted(0), ServerMode::scrape()).await.unwrap();
    let c = reqwest::Client::new();
    let q = q_text(&["zzmark"], DateRange::single(day("2016-01-02")));
    let body = get(&c, &mock.base_url(), "/search", &[("q", &q)]).await.text().await.unwrap();
    assert!(body.contains("stream-container"));
    assert!(!body.contains("data-max-position"));
    assert!(extract_page(&body).unwrap().tweets.is_empty());
}

#[tokio::test]
async fn pages_are_disjoint_descending_and_complete() {
    let mock = MockHandle::local(planted(73), ServerMode::scrape()).await.unwrap();
    let c = reqwest::Client::new();
    let q = q_text(&["zzmark"], DateRange::single(day("2016-01-02")));
    let first = extract_page(&get(&c, &mock.base_url(), "/search", &[("q", &q)]).await.text().await.unwrap()).unwrap();
    let mut served: Vec<u64> = first.tweets.iter().map(|t| t.id.parse().unwrap()).collect();
    let mut cursor = first.cursor.as_str().to_string();
    loop {
        let body = get(&c, &mock.base_url(), "/i/search/timeline", &[("q", &q), ("min_position", &cursor)])
            .await
            .text()
            .await
            .unwrap();
        let payload = parse_continuation(&body).unwrap();
        let page = extract_tweets(&payload.items_html).unwrap();
        let before: u64 = cursor.rsplit('-').next().unwrap().parse().unwrap();
        assert!(page.tweets.iter().all(|t| t.id.parse::<u64>().unwrap() < before));
        served.extend(page.tweets.iter().map(|t| t.id.parse::<u64>().unwrap()));
        if !payload.has_more_items {
            assert!(page.tweets.is_empty());
            assert!(payload.min_position.is_exhausted());
            break;
        }
        cursor = payload.min_position.as_str().to_string();
    }
    assert!(served.windows(2).all(|w| w[0] > w[1]));
    assert_eq!(served.len(), 73);
    let set: BTreeSet<u64> = served.iter().copied().collect();
    assert_eq!(set.len(), 73);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let mock = MockHandle::local(planted(30), ServerMode::scrape()).await.unwrap();
    let c = reqwest::Client::new();
    let base = mock.base_url();
    let q = q_text(&["zzmark"], DateRange::single(day("2016-01-02")));
    let body = get(&c, &base, "/search", &[("q", &q)]).await.text().await.unwrap();
    let cursor = extract_page(&body).unwrap().cursor.as_str().to_string();

    assert_eq!(get(&c, &base, "/search", &[]).await.status(), 400);
    assert_eq!(get(&c, &base, "/search", &[("q", "\"open")]).await.status(), 400);
    assert_eq!(get(&c, &base, "/i/search/timeline", &[("q", &q)]).await.status(), 400);
    assert_eq!(get(&c, &base, "/i/search/timeline", &[("q", &q), ("min_position", "garbage")]).await.status(), 400);
    let tampered = format!("H-000000000000-{}", cursor.rsplit('-').next().unwrap());
    assert_eq!(get(&c, &base, "/i/search/timeline", &[("q", &q), ("min_position", &tampered)]).await.status(), 400);
    let other_q = q_text(&["trump"], DateRange::single(day("2016-01-02")));
    assert_eq!(get(&c, &base, "/i/search/timeline", &[("q", &other_q), ("min_position", &cursor)]).await.status(), 400);
    assert_eq!(get(&c, &base, "/i/search/timeline", &[("q", &q), ("min_position", &cursor)]).await.status(), 200);
}

#[tokio::test]
async fn cursor_past_oldest_is_terminal() {
    let mock = MockHandle::local(planted(5), ServerMode::scrape()).await.unwrap();
    let c = reqwest::Client::new();
    let q = q_text(&["zzmark"], DateRange::single(day("2016-01-02")));
    let cursor = chronoscrape_mock::render::encode_cursor(&q, 1);
    let body = get(&c, &mock.base_url(), "/i/search/timeline", &[("q", &q), ("min_position", &cursor)])
        .await
        .text()
        .await
        .unwrap();
    assert_eq!(body, r#"{"has_more_items":false,"items_html":"","min_position":""}"#);
}

#[tokio::test]
async fn restricted_mode_limits_rate_and_history() {
    let corpus = Corpus::generate(CorpusConfig::new(42, 3000, range("2017-09-20", "2017-10-19")));
    let mock = MockHandle::local(corpus, ServerMode::restricted(5, 10.0, 21)).await.unwrap();
    let c = reqwest::Client::new();
    let base = mock.base_url();

    let old = q_text(&["trump"], DateRange::single(day("2017-09-25")));
    let recent = q_text(&["trump"], DateRange::single(day("2017-10-15")));
    let r = get(&c, &base, "/search", &[("q", &old)]).await;
    assert_eq!(r.status(), 200);
    assert!(extract_page(&r.text().await.unwrap()).unwrap().tweets.is_empty());
    let r = get(&c, &base, "/search", &[("q", &recent)]).await;
    assert!(!extract_page(&r.text().await.unwrap()).unwrap().tweets.is_empty());

    for _ in 0..3 {
        assert_eq!(get(&c, &base, "/search", &[("q", &recent)]).await.status(), 200);
    }
    let limited = get(&c, &base, "/search", &[("q", &recent)]).await;
    assert_eq!(limited.status(), 429);
    let wait: u64 = limited.headers()["retry-after"].to_str().unwrap().parse().unwrap();
    assert!((1..=10).contains(&wait));

    let other = c
        .get(format!("{base}/search"))
        .header("X-Client-Id", "someone-else")
        .query(&[("q", &recent)])
        .send()
        .await
        .unwrap();
    assert_eq!(other.status(), 200);

    mock.set_mode(ServerMode::scrape()).unwrap();
    let r = get(&c, &base, "/search", &[("q", &old)]).await;
    assert_eq!(r.status(), 200);
    assert!(!extract_page(&r.text().await.unwrap()).unwrap().tweets.is_empty());
}

#[tokio::test]
async fn ledger_digest_reset_and_faults() {
    let mock = MockHandle::local(planted(3), ServerMode::scrape()).await.unwrap();
    let c = reqwest::Client::new();
    let base = mock.base_url();
    let ledger: Vec<LedgerEntry> = c.get(format!("{base}/_ledger")).send().await.unwrap().json().await.unwrap();
    assert!(ledger.is_empty());

    let q = q_text(&["zzmark"], DateRange::single(day("2016-01-02")));
    c.post(format!("{base}/_faults?count=2&status=503")).send().await.unwrap();
    assert_eq!(get(&c, &base, "/search", &[("q", &q)]).await.status(), 503);
    assert_eq!(get(&c, &base, "/search", &[("q", &q)]).await.status(), 503);
    assert_eq!(get(&c, &base, "/search", &[("q", &q)]).await.status(), 200);

    let ledger: Vec<LedgerEntry> = c.get(format!("{base}/_ledger")).send().await.unwrap().json().await.unwrap();
    assert_eq!(ledger.iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3]);
    assert_eq!(ledger.iter().map(|e| e.status).collect::<Vec<_>>(), [503, 503, 200]);
    assert_eq!(ledger[2].tweets, 3);
    assert_eq!(ledger[2].q.as_deref(), Some(q.as_str()));
    assert!(ledger.windows(2).all(|w| w[0].mono_us <= w[1].mono_us));
    assert_eq!(mock.ledger(), ledger);

    let info: serde_json::Value = c.get(format!("{base}/_corpus_digest")).send().await.unwrap().json().await.unwrap();
    assert_eq!(info["digest"], mock.digest());
    assert_eq!(info["size"], 403);

    c.post(format!("{base}/_reset")).send().await.unwrap();
    assert!(mock.ledger().is_empty());
    mock.shutdown().await.unwrap();
}
