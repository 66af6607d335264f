//! Key/value form encoding of [`QueryArguments`].
//!
//! Keys are the long argument names (`all-words`, `date-range`, `k-rounds`,
//! ...). The same codec backs the command line, the scheduling API and the
//! console form, so identical inputs yield identical requests everywhere.

use chrono::NaiveDate;

use super::{DateRange, QueryArguments, Violation, Violations};

pub const ALL_WORDS: &str = "all-words";
pub const K_ROUNDS: &str = "k-rounds";
pub const EXACT_PHRASE: &str = "exact-phrase";
pub const ANY_WORDS: &str = "any-words";
pub const HASHTAG: &str = "hashtag";
pub const LANGUAGE: &str = "language";
pub const ACCOUNT: &str = "account";
pub const ACCOUNT_FROM: &str = "account-from";
pub const ACCOUNT_MENTION: &str = "account-mention";
pub const NEAR_PLACE: &str = "near-place";
pub const NEAR_PLACE_MILES: &str = "near-place-miles";
pub const DATE_RANGE: &str = "date-range";

pub const QUERY_FIELDS: [&str; 12] = [
    ALL_WORDS,
    K_ROUNDS,
    EXACT_PHRASE,
    ANY_WORDS,
    HASHTAG,
    LANGUAGE,
    ACCOUNT,
    ACCOUNT_FROM,
    ACCOUNT_MENTION,
    NEAR_PLACE,
    NEAR_PLACE_MILES,
    DATE_RANGE,
];

pub fn is_query_field(key: &str) -> bool {
    QUERY_FIELDS.contains(&key)
}

/// Build and validate a query from form pairs. Keys outside
/// [`QUERY_FIELDS`] are ignored; list fields may repeat and may hold
/// comma- or space-separated values.
pub fn query_from_pairs<I, K, V>(pairs: I) -> Result<QueryArguments, Violations>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut problems = Vec::new();
    let mut range: Option<DateRange> = None;
    let mut q = QueryArguments::new(DateRange::single(NaiveDate::MIN));

    for (key, value) in pairs {
        let (key, raw) = (key.as_ref(), value.as_ref());
        let value = raw.trim();
        match key {
            ALL_WORDS => q.all_words.extend(split_list(value)),
            ANY_WORDS => q.any_words.extend(split_list(value)),
            HASHTAG => q.hashtags.extend(split_list(value)),
            EXACT_PHRASE => single(&mut q.exact_phrase, key, value, &mut problems),
            LANGUAGE => single(&mut q.language, key, value, &mut problems),
            ACCOUNT => single(&mut q.account, key, value, &mut problems),
            ACCOUNT_FROM => single(&mut q.account_from, key, value, &mut problems),
            ACCOUNT_MENTION => single(&mut q.account_mention, key, value, &mut problems),
            NEAR_PLACE => single(&mut q.near_place, key, value, &mut problems),
            K_ROUNDS => match value.parse::<u32>() {
                Ok(k) => q.k_rounds = k,
                Err(e) => problems.push(malformed(key, value, e.to_string())),
            },
            NEAR_PLACE_MILES => match value.parse::<u32>() {
                Ok(m) => q.near_place_miles = Some(m),
                Err(e) => problems.push(malformed(key, value, e.to_string())),
            },
            DATE_RANGE => match value.parse::<DateRange>() {
                Ok(r) if range.is_none() => range = Some(r),
                Ok(_) => problems.push(malformed(key, value, "given more than once".into())),
                Err(e) => problems.push(malformed(key, value, e)),
            },
            _ => {}
        }
    }

    match range {
        Some(r) => q.date_range = r,
        None => problems.push(Violation::MissingDateRange),
    }
    if let Err(v) = q.validate() {
        problems.extend(v.0);
    }
    if problems.is_empty() {
        Ok(q)
    } else {
        Err(Violations(problems))
    }
}

/// Canonical form pairs for `q`: list items as repeated keys, optional
/// fields only when present.
pub fn query_to_pairs(q: &QueryArguments) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    out.extend(q.all_words.iter().map(|w| (ALL_WORDS, w.clone())));
    out.push((K_ROUNDS, q.k_rounds.to_string()));
    if let Some(p) = &q.exact_phrase {
        out.push((EXACT_PHRASE, p.clone()));
    }
    out.extend(q.any_words.iter().map(|w| (ANY_WORDS, w.clone())));
    out.extend(q.hashtags.iter().map(|h| (HASHTAG, h.clone())));
    for (key, v) in [
        (LANGUAGE, &q.language),
        (ACCOUNT, &q.account),
        (ACCOUNT_FROM, &q.account_from),
        (ACCOUNT_MENTION, &q.account_mention),
        (NEAR_PLACE, &q.near_place),
    ] {
        if let Some(v) = v {
            out.push((key, v.clone()));
        }
    }
    if let Some(m) = q.near_place_miles {
        out.push((NEAR_PLACE_MILES, m.to_string()));
    }
    out.push((DATE_RANGE, q.date_range.to_string()));
    out
}

fn split_list(value: &str) -> impl Iterator<Item = String> + '_ {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn single(slot: &mut Option<String>, key: &str, value: &str, problems: &mut Vec<Violation>) {
    if value.is_empty() {
        return;
    }
    if slot.is_some() {
        problems.push(malformed(key, value, "given more than once".into()));
    } else {
        *slot = Some(value.to_string());
    }
}

fn malformed(field: &str, value: &str, reason: String) -> Violation {
    Violation::Malformed {
        field: field.to_string(),
        value: value.to_string(),
        reason,
    }
}
