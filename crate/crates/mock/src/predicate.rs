//! The query predicate shared by the server and test oracles.
//!
//! Matching is case-insensitive over whitespace tokens with surrounding
//! punctuation trimmed: plain words are ANDed, the any-words group is ORed,
//! the phrase is a substring, hashtags and mentions are token matches,
//! `from:`/`to:` compare author and reply target, `near:` compares the place
//! name (`within:` accepts everything), `lang:` compares the language and the
//! post's day must fall in the range.

use chronoscrape_core::query::{DateRange, QueryArguments};

use crate::corpus::{Corpus, MockTweet};

fn trim_token(t: &str) -> &str {
    t.trim_matches(|c: char| !(c.is_alphanumeric() || c == '#' || c == '@' || c == '_'))
}

pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(trim_token)
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn norm_word(w: &str) -> String {
    trim_token(w).to_lowercase()
}

fn bare(a: &str) -> String {
    a.trim_start_matches('@').to_lowercase()
}

/// A compiled query.
#[derive(Debug, Clone)]
pub struct Predicate {
    all: Vec<String>,
    any: Vec<String>,
    phrase: Option<String>,
    hashtags: Vec<String>,
    from: Option<String>,
    to: Option<String>,
    mention: Option<String>,
    place: Option<String>,
    lang: Option<String>,
    range: DateRange,
}

impl Predicate {
    pub fn new(q: &QueryArguments) -> Self {
        Self {
            all: q.all_words.iter().map(|w| norm_word(w)).collect(),
            any: q.any_words.iter().map(|w| norm_word(w)).collect(),
            phrase: q.exact_phrase.as_ref().map(|p| p.to_lowercase()),
            hashtags: q.canonical_hashtags().map(|h| h.to_lowercase()).collect(),
            from: q.account.as_deref().map(bare),
            to: q.account_from.as_deref().map(bare),
            mention: q.account_mention.as_deref().map(|a| format!("@{}", bare(a))),
            place: q.near_place.as_ref().map(|p| p.to_lowercase()),
            lang: q.language.clone(),
            range: q.date_range,
        }
    }

    pub fn range(&self) -> DateRange {
        self.range
    }

    pub fn matches(&self, t: &MockTweet) -> bool {
        if !self.range.contains_date(t.day()) {
            return false;
        }
        if let Some(lang) = &self.lang {
            if &t.lang != lang {
                return false;
            }
        }
        if let Some(from) = &self.from {
            if &t.tweet.author.to_lowercase() != from {
                return false;
            }
        }
        if let Some(to) = &self.to {
            if t.reply_to.as_ref().map(|r| r.to_lowercase()).as_ref() != Some(to) {
                return false;
            }
        }
        if let Some(place) = &self.place {
            match &t.tweet.geodata {
                Some(g) if &g.place_name.to_lowercase() == place => {}
                _ => return false,
            }
        }
        let lower = t.tweet.text.to_lowercase();
        if let Some(p) = &self.phrase {
            if !lower.contains(p.as_str()) {
                return false;
            }
        }
        let toks = tokens(&t.tweet.text);
        let has = |w: &String| toks.iter().any(|t| t == w);
        self.all.iter().all(has)
            && (self.any.is_empty() || self.any.iter().any(has))
            && self.hashtags.iter().all(has)
            && self.mention.as_ref().is_none_or(has)
    }
}

/// Every corpus post matching `q`, newest first.
pub fn oracle<'c>(corpus: &'c Corpus, q: &QueryArguments) -> Vec<&'c MockTweet> {
    let p = Predicate::new(q);
    corpus
        .in_range(q.date_range)
        .iter()
        .rev()
        .filter(|t| p.matches(t))
        .collect()
}
