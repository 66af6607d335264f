//! Seeded synthetic corpus.

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use chrono::{DateTime, NaiveDate};
use chronoscrape_core::extract::{GeoData, Tweet};
use chronoscrape_core::query::DateRange;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_VOCABULARY: &[&str] = &[
    "trump", "election", "vote", "debate", "flu", "fever", "vaccine", "weather", "rain", "storm",
    "market", "stocks", "crypto", "football", "goal", "match", "music", "concert", "movie", "coffee",
    "python", "rust", "data", "science", "climate", "energy", "travel", "beach", "food", "pizza",
    "news", "breaking", "policy", "health", "school", "traffic", "city", "night", "morning", "happy",
];

pub const LANGUAGES: &[&str] = &["en", "en", "en", "es", "es", "fr", "de", "pt"];

pub const PLACES: &[(&str, f64, f64)] = &[
    ("Coventry", 52.4068, -1.5197),
    ("Quito", -0.1807, -78.4678),
    ("Madrid", 40.4168, -3.7038),
    ("New York", 40.7128, -74.006),
    ("Tokyo", 35.6762, 139.6503),
    ("Lima", -12.0464, -77.0428),
];

const AUTHORS: usize = 40;

/// A corpus post plus the fields only the server sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockTweet {
    pub tweet: Tweet,
    pub lang: String,
    /// Account this post replies to.
    pub reply_to: Option<String>,
}

impl MockTweet {
    pub fn id_num(&self) -> u64 {
        self.tweet.id.parse().expect("corpus ids are numeric")
    }

    pub fn day(&self) -> NaiveDate {
        self.tweet.created_at.date_naive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub size: usize,
    pub range: DateRange,
    pub vocabulary: Vec<String>,
    /// Share of posts carrying geodata.
    pub geo_fraction: f64,
}

impl CorpusConfig {
    pub fn new(seed: u64, size: usize, range: DateRange) -> Self {
        Self {
            seed,
            size,
            range,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            geo_fraction: 0.2,
        }
    }
}

/// Immutable post collection, oldest first, ids strictly increasing.
#[derive(Debug, Clone)]
pub struct Corpus {
    config: CorpusConfig,
    tweets: Vec<MockTweet>,
    by_day: BTreeMap<NaiveDate, Range<usize>>,
    digest: String,
}

pub fn author_name(i: usize) -> String {
    format!("user_{i:02}")
}

fn day_bounds(range: DateRange) -> (i64, i64) {
    let start = range.since.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
    let end = range.until.and_hms_opt(23, 59, 59).unwrap().and_utc().timestamp();
    (start, end)
}

impl Corpus {
    pub fn generate(config: CorpusConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (start, end) = day_bounds(config.range);
        let span = (end - start + 1) as usize;
        let size = config.size.min(span);

        let mut seen = HashSet::with_capacity(size);
        let mut times = Vec::with_capacity(size);
        while times.len() < size {
            let t = rng.gen_range(start..=end);
            if seen.insert(t) {
                times.push(t);
            }
        }
        times.sort_unstable();

        let mut tweets = Vec::with_capacity(size);
        let mut id: u64 = 700_000_000_000;
        for secs in times {
            id += rng.gen_range(1..=97);
            tweets.push(Self::random_tweet(&mut rng, &config, id, secs));
        }
        Self::from_parts(config, tweets)
    }

    fn random_tweet(rng: &mut ChaCha8Rng, config: &CorpusConfig, id: u64, secs: i64) -> MockTweet {
        let vocab = &config.vocabulary;
        let n = rng.gen_range(3..=8);
        let mut words: Vec<String> = (0..n)
            .map(|_| vocab.choose(rng).cloned().unwrap_or_else(|| "post".into()))
            .collect();
        if rng.gen_bool(0.25) {
            if let Some(w) = vocab.choose(rng) {
                words.push(format!("#{w}"));
            }
        }
        if rng.gen_bool(0.15) {
            words.push(format!("@{}", author_name(rng.gen_range(0..AUTHORS))));
        }
        if rng.gen_bool(0.2) {
            let i = rng.gen_range(0..words.len());
            words[i].push_str([",", ".", "!", "?"][rng.gen_range(0..4)]);
        }
        let geodata = rng.gen_bool(config.geo_fraction.clamp(0.0, 1.0)).then(|| {
            let (name, lat, lon) = PLACES[rng.gen_range(0..PLACES.len())];
            GeoData {
                latitude: lat,
                longitude: lon,
                place_name: name.to_string(),
            }
        });
        MockTweet {
            tweet: Tweet {
                id: id.to_string(),
                text: words.join(" "),
                created_at: DateTime::from_timestamp(secs, 0).unwrap(),
                geodata,
                author: author_name(rng.gen_range(0..AUTHORS)),
            },
            lang: LANGUAGES[rng.gen_range(0..LANGUAGES.len())].to_string(),
            reply_to: rng
                .gen_bool(0.1)
                .then(|| author_name(rng.gen_range(0..AUTHORS))),
        }
    }

    /// Add `count` posts with fixed `text` on `day`, keeping id order.
    ///
    /// Used to build fixtures with an exact number of matches per day.
    pub fn with_planted(self, day: NaiveDate, count: usize, text: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed ^ day.to_string().len() as u64 ^ count as u64);
        let (start, end) = day_bounds(DateRange::single(day));
        let taken: HashSet<i64> = self.tweets.iter().map(|t| t.tweet.created_at.timestamp()).collect();
        let mut times = Vec::new();
        let mut local = HashSet::new();
        while times.len() < count {
            let t = rng.gen_range(start..=end);
            if !taken.contains(&t) && local.insert(t) {
                times.push(t);
            }
        }
        let mut tweets = self.tweets;
        for secs in times {
            tweets.push(MockTweet {
                tweet: Tweet {
                    id: String::new(),
                    text: text.to_string(),
                    created_at: DateTime::from_timestamp(secs, 0).unwrap(),
                    geodata: None,
                    author: author_name(0),
                },
                lang: "en".into(),
                reply_to: None,
            });
        }
        tweets.sort_by_key(|t| t.tweet.created_at);
        let mut id: u64 = 700_000_000_000;
        for t in &mut tweets {
            id += 13;
            t.tweet.id = id.to_string();
        }
        let mut config = self.config;
        config.size = tweets.len();
        if day < config.range.since {
            config.range.since = day;
        }
        if day > config.range.until {
            config.range.until = day;
        }
        Self::from_parts(config, tweets)
    }

    fn from_parts(config: CorpusConfig, tweets: Vec<MockTweet>) -> Self {
        let mut by_day: BTreeMap<NaiveDate, Range<usize>> = BTreeMap::new();
        for (i, t) in tweets.iter().enumerate() {
            by_day.entry(t.day()).and_modify(|r| r.end = i + 1).or_insert(i..i + 1);
        }
        let digest = digest_of(&config, &tweets);
        Self {
            config,
            tweets,
            by_day,
            digest,
        }
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn range(&self) -> DateRange {
        self.config.range
    }

    /// Oldest first.
    pub fn tweets(&self) -> &[MockTweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    /// Posts of the days in `range`, oldest first.
    pub fn in_range(&self, range: DateRange) -> &[MockTweet] {
        let mut days = self.by_day.range(range.since..=range.until);
        let Some((_, first)) = days.next() else {
            return &[];
        };
        let end = days.last().map_or(first.end, |(_, r)| r.end);
        &self.tweets[first.start..end]
    }

    /// Hex sha256 over the canonical serialization of the posts.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

fn digest_of(config: &CorpusConfig, tweets: &[MockTweet]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}\t{}\n", config.seed, config.range));
    for t in tweets {
        let geo = t.tweet.geodata.as_ref().map(GeoData::to_attr).unwrap_or_default();
        h.update(format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.tweet.id,
            t.tweet.created_at.timestamp(),
            t.tweet.author,
            t.lang,
            t.reply_to.as_deref().unwrap_or(""),
            geo,
            t.tweet.text
        ));
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range(a: &str, b: &str) -> DateRange {
        DateRange::new(a.parse().unwrap(), b.parse().unwrap())
    }

    #[test]
    fn empty_corpus() {
        let c = Corpus::generate(CorpusConfig::new(42, 0, range("2017-10-01", "2017-10-30")));
        assert!(c.is_empty());
        assert!(c.in_range(c.range()).is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let r = range("2017-10-01", "2017-10-30");
        let a = Corpus::generate(CorpusConfig::new(42, 5000, r));
        let b = Corpus::generate(CorpusConfig::new(42, 5000, r));
        let c = Corpus::generate(CorpusConfig::new(43, 5000, r));
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.len(), 5000);
    }

    #[test]
    fn ids_increase_with_time_and_stay_in_range() {
        let r = range("2016-02-27", "2016-03-02");
        let c = Corpus::generate(CorpusConfig::new(7, 800, r));
        for w in c.tweets().windows(2) {
            assert!(w[0].id_num() < w[1].id_num());
            assert!(w[0].tweet.created_at < w[1].tweet.created_at);
        }
        assert!(c.tweets().iter().all(|t| r.contains_date(t.day())));
        let geo = c.tweets().iter().filter(|t| t.tweet.geodata.is_some()).count();
        assert!((80..=240).contains(&geo), "{geo}");
    }

    #[test]
    fn day_index_matches_scan() {
        let r = range("2016-01-01", "2016-01-10");
        let c = Corpus::generate(CorpusConfig::new(1, 300, r));
        let sub = range("2016-01-03", "2016-01-05");
        let scan: Vec<&MockTweet> = c.tweets().iter().filter(|t| sub.contains_date(t.day())).collect();
        let idx: Vec<&MockTweet> = c.in_range(sub).iter().collect();
        assert_eq!(scan, idx);
        assert!(c.in_range(range("2015-01-01", "2015-01-02")).is_empty());
    }

    #[test]
    fn planting_keeps_order() {
        let r = range("2016-01-01", "2016-01-03");
        let d: NaiveDate = "2016-01-02".parse().unwrap();
        let c = Corpus::generate(CorpusConfig::new(3, 100, r)).with_planted(d, 21, "zzplant here");
        assert_eq!(c.len(), 121);
        let planted = c.in_range(DateRange::single(d)).iter().filter(|t| t.tweet.text == "zzplant here").count();
        assert_eq!(planted, 21);
        for w in c.tweets().windows(2) {
            assert!(w[0].id_num() < w[1].id_num());
        }
    }
}
