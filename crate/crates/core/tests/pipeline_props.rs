use chrono::DateTime;
use chronoscrape_core::extract::Tweet;
use chronoscrape_core::pipeline::{
    read_jsonl, write_csv_to, write_jsonl_to, write_plaintext_to, IngestPipeline, ItemStore,
    MemoryStore, TweetSink,
};
use proptest::prelude::*;

fn tweet(id: u16, secs: u16) -> Tweet {
    Tweet {
        id: id.to_string(),
        text: format!("text {id}, \"q\"\nline"),
        created_at: DateTime::from_timestamp(1_400_000_000 + secs as i64, 0).unwrap(),
        geodata: None,
        author: "a".into(),
    }
}

fn ingest(stream: &[(u16, u16)]) -> IngestPipeline<MemoryStore> {
    let mut p = IngestPipeline::new(MemoryStore::default(), "h");
    for (id, secs) in stream {
        p.accept(tweet(*id, *secs)).unwrap();
    }
    p
}

proptest! {
    #[test]
    fn no_data_loss_and_unique_keys(ids in prop::collection::vec(0u16..50, 0..200)) {
        let stream: Vec<(u16, u16)> = ids.iter().map(|i| (*i, *i)).collect();
        let p = ingest(&stream);
        let s = p.stats();
        prop_assert_eq!(s.appended + s.duplicates, s.emitted);
        prop_assert_eq!(s.emitted, stream.len() as u64);
        let distinct: std::collections::BTreeSet<u16> = ids.iter().copied().collect();
        prop_assert_eq!(p.store().len(), distinct.len());
    }

    #[test]
    fn replaying_a_stream_yields_the_same_store(ids in prop::collection::vec(0u16..50, 0..100)) {
        let stream: Vec<(u16, u16)> = ids.iter().map(|i| (*i, *i)).collect();
        let a = ingest(&stream);
        let mut twice = stream.clone();
        twice.extend(&stream);
        let b = ingest(&twice);
        let key = |p: &IngestPipeline<MemoryStore>| {
            p.store().items().iter().map(|i| i.tweet.clone()).collect::<Vec<_>>()
        };
        prop_assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn sinks_agree(ids in prop::collection::btree_set(0u16..500, 0..60)) {
        let stream: Vec<(u16, u16)> = ids.iter().map(|i| (*i, 500 - *i)).collect();
        let p = ingest(&stream);
        let items = p.store().items();
        let (mut j, mut c, mut t) = (Vec::new(), Vec::new(), Vec::new());
        write_jsonl_to(items, &mut j).unwrap();
        write_csv_to(items, &mut c).unwrap();
        write_plaintext_to(items, &mut t).unwrap();
        let recs = read_jsonl(j.as_slice()).unwrap();
        let rows: Vec<csv::StringRecord> = csv::Reader::from_reader(c.as_slice()).records().map(Result::unwrap).collect();
        let lines: Vec<String> = String::from_utf8(t).unwrap().lines().map(String::from).collect();
        prop_assert_eq!(recs.len(), rows.len());
        prop_assert_eq!(recs.len(), lines.len());
        for ((r, row), line) in recs.iter().zip(&rows).zip(&lines) {
            prop_assert_eq!(&r.id, &row[0]);
            prop_assert_eq!(&r.text, &row[1]);
            prop_assert_eq!(r.text.replace('\n', " "), line.clone());
        }
        prop_assert!(recs.windows(2).all(|w| w[0].created_at >= w[1].created_at));
    }
}
