//! Advanced-search queries.
//!
//! [`QueryArguments`] carries every argument of an advanced search (words,
//! phrase, accounts, place, language, date range and crawl depth). This module
//! validates those arguments, serializes them into the canonical operator
//! grammar understood by the search endpoints, parses that grammar back, and
//! composes the two endpoint URLs the crawler drives.

mod date;
pub mod form;
mod grammar;
mod endpoint;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use date::{parse_loose_date, DateRange, DateRangeIter};
pub use grammar::{compose_query_string, parse_query_string, ParseError};
pub use endpoint::{encode_component, EndpointKind, EndpointUrl, SearchEndpoints};

/// Default number of crawl rounds (`k`).
pub const DEFAULT_K_ROUNDS: u32 = 1;
/// Default radius for `near:` searches, in miles (`gK`).
pub const DEFAULT_NEAR_PLACE_MILES: u32 = 15;

/// The full advanced-search request.
///
/// List-valued selectors use an empty `Vec` for "absent".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryArguments {
    /// Every listed word must appear (`w`).
    pub all_words: Vec<String>,
    /// Number of full sweeps over the date range (`k`).
    pub k_rounds: u32,
    /// Exact phrase (`e`).
    pub exact_phrase: Option<String>,
    /// At least one of these words must appear (`aW`).
    pub any_words: Vec<String>,
    /// Hashtags, with or without the leading `#` (`h`).
    pub hashtags: Vec<String>,
    /// ISO 639-1 language code (`l`).
    pub language: Option<String>,
    /// Posts written by this account (`p`).
    pub account: Option<String>,
    /// Posts addressed to this account (`pF`).
    pub account_from: Option<String>,
    /// Posts mentioning this account (`pM`).
    pub account_mention: Option<String>,
    /// Place name for a proximity search (`g`).
    pub near_place: Option<String>,
    /// Radius around `near_place`; `None` means the default of 15 (`gK`).
    pub near_place_miles: Option<u32>,
    /// Inclusive date range (`d`).
    pub date_range: DateRange,
}

impl QueryArguments {
    /// An argument set with every optional field absent and defaults applied.
    pub fn new(date_range: DateRange) -> Self {
        Self {
            all_words: Vec::new(),
            k_rounds: DEFAULT_K_ROUNDS,
            exact_phrase: None,
            any_words: Vec::new(),
            hashtags: Vec::new(),
            language: None,
            account: None,
            account_from: None,
            account_mention: None,
            near_place: None,
            near_place_miles: None,
            date_range,
        }
    }

    pub fn with_all_words<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.all_words = words.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_k_rounds(mut self, k: u32) -> Self {
        self.k_rounds = k;
        self
    }

    pub fn effective_miles(&self) -> u32 {
        self.near_place_miles.unwrap_or(DEFAULT_NEAR_PLACE_MILES)
    }

    /// Hashtags rendered with exactly one leading `#`.
    pub fn canonical_hashtags(&self) -> impl Iterator<Item = String> + '_ {
        self.hashtags
            .iter()
            .map(|h| format!("#{}", h.trim_start_matches('#')))
    }

    /// Canonical form used for equality "modulo defaults": hashtags carry a
    /// `#`, and the radius is explicit exactly when a place is present.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.hashtags = self.canonical_hashtags().collect();
        out.near_place_miles = self.near_place.as_ref().map(|_| self.effective_miles());
        out
    }

    pub fn has_content_selector(&self) -> bool {
        !self.all_words.is_empty()
            || self.exact_phrase.is_some()
            || !self.any_words.is_empty()
            || !self.hashtags.is_empty()
    }

    /// Check every invariant and report all violations at once.
    pub fn validate(&self) -> Result<(), Violations> {
        let mut found = Vec::new();

        if !self.has_content_selector() {
            found.push(Violation::NoContentSelector);
        }
        if self.k_rounds == 0 {
            found.push(Violation::ZeroRounds);
        }
        if self.date_range.since > self.date_range.until {
            found.push(Violation::InvertedRange {
                since: self.date_range.since.to_string(),
                until: self.date_range.until.to_string(),
            });
        }
        match (self.near_place_miles, &self.near_place) {
            (Some(0), _) => found.push(Violation::ZeroMiles),
            (Some(_), None) => found.push(Violation::MilesWithoutPlace),
            _ => {}
        }
        if let Some(lang) = &self.language {
            if !is_iso_639_1(lang) {
                found.push(Violation::BadLanguage(lang.clone()));
            }
        }

        for w in &self.all_words {
            check_word("all-words", w, &mut found);
        }
        for w in &self.any_words {
            check_word("any-words", w, &mut found);
        }
        for h in &self.hashtags {
            check_word("hashtag", h.strip_prefix('#').unwrap_or(h), &mut found);
        }
        if let Some(p) = &self.exact_phrase {
            check_phrase("exact-phrase", p, &mut found);
        }
        if let Some(p) = &self.near_place {
            check_phrase("near-place", p, &mut found);
        }
        for (field, acct) in [
            ("account", &self.account),
            ("account-from", &self.account_from),
            ("account-mention", &self.account_mention),
        ] {
            if let Some(a) = acct {
                let a = a.strip_prefix('@').unwrap_or(a);
                if a.is_empty() || !a.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    found.push(Violation::Unrepresentable {
                        field,
                        value: a.to_string(),
                    });
                }
            }
        }

        if found.is_empty() {
            Ok(())
        } else {
            Err(Violations(found))
        }
    }

    /// Stable identity of the search itself (selectors and full date range).
    ///
    /// Crawl depth is excluded so re-running with a different `k` keeps
    /// stored items comparable.
    pub fn query_hash(&self) -> String {
        let mut hasher = Sha256::new();
        let n = self.normalized();
        let line = grammar::render(&n, n.date_range);
        hasher.update(line.as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }
}

fn is_iso_639_1(s: &str) -> bool {
    s.len() == 2 && s.bytes().all(|b| b.is_ascii_lowercase())
}

fn check_word(field: &'static str, w: &str, found: &mut Vec<Violation>) {
    let bad = w.is_empty()
        || w == "OR"
        || w.starts_with(['#', '@'])
        || w.contains(':')
        || w.chars()
            .any(|c| c.is_whitespace() || matches!(c, '"' | '(' | ')'));
    if bad {
        found.push(Violation::Unrepresentable {
            field,
            value: w.to_string(),
        });
    }
}

fn check_phrase(field: &'static str, p: &str, found: &mut Vec<Violation>) {
    if p.trim().is_empty() || p.contains('"') || p.trim() != p {
        found.push(Violation::Unrepresentable {
            field,
            value: p.to_string(),
        });
    }
}

/// One broken constraint of a query request.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("no content selector: one of all-words, exact-phrase, any-words or hashtag is required")]
    NoContentSelector,
    #[error("k-rounds must be at least 1")]
    ZeroRounds,
    #[error("since > until: {since} is after {until}")]
    InvertedRange { since: String, until: String },
    #[error("near-place-miles must be at least 1")]
    ZeroMiles,
    #[error("near-place-miles given without near-place")]
    MilesWithoutPlace,
    #[error("language must be a two-letter lowercase ISO 639-1 code, got {0:?}")]
    BadLanguage(String),
    #[error("{field} value {value:?} cannot be expressed as a search operator")]
    Unrepresentable { field: &'static str, value: String },
    #[error("missing date-range")]
    MissingDateRange,
    #[error("malformed {field} {value:?}: {reason}")]
    Malformed {
        field: String,
        value: String,
        reason: String,
    },
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
}

/// Every violation found in one request, in discovery order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    pub fn messages(&self) -> Vec<String> {
        self.0.iter().map(ToString::to_string).collect()
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.messages().join("; "))
    }
}

impl std::error::Error for Violations {}

/// Failures of the query-level operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("invalid arguments: {0}")]
    InvalidArguments(Violations),
    #[error("window {window} is outside the query range {range}")]
    WindowOutsideRange { window: DateRange, range: DateRange },
    #[error("continuation cursor is empty")]
    EmptyCursor,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn table2() -> QueryArguments {
        QueryArguments::new(DateRange::new(day(2016, 1, 2), day(2016, 1, 2)))
            .with_all_words(["trump"])
            .with_k_rounds(4)
    }

    #[test]
    fn table2_query_is_valid() {
        assert_eq!(table2().validate(), Ok(()));
    }

    #[test]
    fn empty_selectors_are_rejected() {
        let q = QueryArguments::new(DateRange::single(day(2016, 1, 2)));
        let err = q.validate().unwrap_err();
        assert_eq!(err.0, vec![Violation::NoContentSelector]);
        assert!(err.to_string().contains("no content selector"));
    }

    #[test]
    fn inverted_range_is_rejected() {
        let q = QueryArguments::new(DateRange::new(day(2017, 10, 19), day(2017, 10, 9)))
            .with_all_words(["x"]);
        let err = q.validate().unwrap_err();
        assert!(err.to_string().contains("since > until"));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut q = QueryArguments::new(DateRange::new(day(2017, 10, 19), day(2017, 10, 9)));
        q.k_rounds = 0;
        q.near_place_miles = Some(10);
        q.language = Some("ESP".into());
        let err = q.validate().unwrap_err();
        assert_eq!(err.0.len(), 5, "{err}");
        assert!(err.0.contains(&Violation::MilesWithoutPlace));
        assert!(err.0.contains(&Violation::ZeroRounds));
    }

    #[test]
    fn miles_with_place_is_fine() {
        let mut q = table2();
        q.near_place = Some("Mexico City".into());
        q.near_place_miles = Some(10);
        assert!(q.validate().is_ok());
        q.near_place_miles = Some(0);
        assert_eq!(q.validate().unwrap_err().0, vec![Violation::ZeroMiles]);
    }

    #[test]
    fn operator_lookalike_words_are_rejected() {
        let q = table2().with_all_words(["since:2016-01-01", "OR", "two words"]);
        assert_eq!(q.validate().unwrap_err().0.len(), 3);
    }

    #[test]
    fn query_hash_ignores_rounds_and_hash_prefix() {
        let a = table2();
        let mut b = table2().with_k_rounds(1);
        assert_eq!(a.query_hash(), b.query_hash());
        b.all_words = vec!["clinton".into()];
        assert_ne!(a.query_hash(), b.query_hash());

        let mut h1 = table2();
        h1.hashtags = vec!["ai".into()];
        let mut h2 = table2();
        h2.hashtags = vec!["#ai".into()];
        assert_eq!(h1.query_hash(), h2.query_hash());
        assert_eq!(h1.query_hash().len(), 16);
    }
}
