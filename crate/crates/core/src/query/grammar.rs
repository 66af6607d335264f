//! The advanced-search operator grammar.
//!
//! Canonical order: words, `"phrase"`, `(a OR b)`, `#tags`, `from:`, `to:`,
//! `@mention`, `near:"place" within:Nmi`, `lang:xx`, `since:` and `until:`.
//! Absent fields emit nothing. The parser accepts operators in any order.

use chrono::NaiveDate;

use super::{parse_loose_date, DateRange, QueryArguments, QueryError};

/// Serialize `q` restricted to `window` into the canonical query string.
pub fn compose_query_string(q: &QueryArguments, window: DateRange) -> Result<String, QueryError> {
    q.validate().map_err(QueryError::InvalidArguments)?;
    if !window.is_valid() || !q.date_range.contains(&window) {
        return Err(QueryError::WindowOutsideRange {
            window,
            range: q.date_range,
        });
    }
    Ok(render(q, window))
}

pub(super) fn render(q: &QueryArguments, window: DateRange) -> String {
    let mut parts: Vec<String> = q.all_words.clone();
    if let Some(phrase) = &q.exact_phrase {
        parts.push(format!("\"{phrase}\""));
    }
    if !q.any_words.is_empty() {
        parts.push(format!("({})", q.any_words.join(" OR ")));
    }
    parts.extend(q.canonical_hashtags());
    if let Some(a) = &q.account {
        parts.push(format!("from:{}", bare_account(a)));
    }
    if let Some(a) = &q.account_from {
        parts.push(format!("to:{}", bare_account(a)));
    }
    if let Some(a) = &q.account_mention {
        parts.push(format!("@{}", bare_account(a)));
    }
    if let Some(place) = &q.near_place {
        parts.push(format!("near:\"{place}\""));
        parts.push(format!("within:{}mi", q.effective_miles()));
    }
    if let Some(lang) = &q.language {
        parts.push(format!("lang:{lang}"));
    }
    parts.push(format!("since:{}", window.since.format("%Y-%m-%d")));
    parts.push(format!("until:{}", window.until.format("%Y-%m-%d")));
    parts.join(" ")
}

fn bare_account(a: &str) -> &str {
    a.strip_prefix('@').unwrap_or(a)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unterminated quote starting at byte {0}")]
    UnterminatedQuote(usize),
    #[error("unterminated group starting at byte {0}")]
    UnterminatedGroup(usize),
    #[error("malformed OR group {0:?}")]
    BadGroup(String),
    #[error("unknown operator {0:?}")]
    UnknownOperator(String),
    #[error("operator {0} given more than once")]
    Duplicate(&'static str),
    #[error("bad value for {op}: {value:?}")]
    BadValue { op: &'static str, value: String },
    #[error("query has no since:/until: window")]
    MissingWindow,
    #[error("stray OR outside a group")]
    StrayOr,
}

/// Parse a query string back into arguments.
///
/// The date range comes from `since:`/`until:`; `k_rounds` takes its default.
/// The result is not validated.
pub fn parse_query_string(s: &str) -> Result<QueryArguments, ParseError> {
    let mut since: Option<NaiveDate> = None;
    let mut until: Option<NaiveDate> = None;
    let placeholder = NaiveDate::MIN;
    let mut q = QueryArguments::new(DateRange::single(placeholder));

    for token in tokenize(s)? {
        match token {
            Token::Phrase(p) => set_once(&mut q.exact_phrase, p, "exact phrase")?,
            Token::Group(words) => {
                if !q.any_words.is_empty() {
                    return Err(ParseError::Duplicate("OR group"));
                }
                q.any_words = words;
            }
            Token::Bare(t) => classify(&t, &mut q, &mut since, &mut until)?,
        }
    }

    match (since, until) {
        (Some(s), Some(u)) => q.date_range = DateRange::new(s, u),
        _ => return Err(ParseError::MissingWindow),
    }
    Ok(q)
}

fn classify(
    t: &str,
    q: &mut QueryArguments,
    since: &mut Option<NaiveDate>,
    until: &mut Option<NaiveDate>,
) -> Result<(), ParseError> {
    if t == "OR" {
        return Err(ParseError::StrayOr);
    }
    if let Some(tag) = t.strip_prefix('#') {
        if tag.is_empty() {
            return Err(ParseError::BadValue { op: "#", value: t.into() });
        }
        q.hashtags.push(t.to_string());
        return Ok(());
    }
    if let Some(name) = t.strip_prefix('@') {
        return set_once(&mut q.account_mention, non_empty("@", name)?, "@");
    }
    let Some((op, value)) = t.split_once(':') else {
        q.all_words.push(t.to_string());
        return Ok(());
    };
    match op {
        "from" => set_once(&mut q.account, non_empty("from:", value)?, "from:"),
        "to" => set_once(&mut q.account_from, non_empty("to:", value)?, "to:"),
        "lang" => set_once(&mut q.language, non_empty("lang:", value)?, "lang:"),
        "near" => {
            let place = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .ok_or_else(|| ParseError::BadValue { op: "near:", value: value.into() })?;
            set_once(&mut q.near_place, non_empty("near:", place)?, "near:")
        }
        "within" => {
            let miles = value
                .strip_suffix("mi")
                .and_then(|n| n.parse::<u32>().ok())
                .ok_or_else(|| ParseError::BadValue { op: "within:", value: value.into() })?;
            set_once(&mut q.near_place_miles, miles, "within:")
        }
        "since" => set_once(since, date("since:", value)?, "since:"),
        "until" => set_once(until, date("until:", value)?, "until:"),
        _ => Err(ParseError::UnknownOperator(t.to_string())),
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, op: &'static str) -> Result<(), ParseError> {
    if slot.is_some() {
        return Err(ParseError::Duplicate(op));
    }
    *slot = Some(value);
    Ok(())
}

fn non_empty(op: &'static str, v: &str) -> Result<String, ParseError> {
    if v.is_empty() {
        Err(ParseError::BadValue { op, value: String::new() })
    } else {
        Ok(v.to_string())
    }
}

fn date(op: &'static str, v: &str) -> Result<NaiveDate, ParseError> {
    parse_loose_date(v).map_err(|_| ParseError::BadValue { op, value: v.into() })
}

enum Token {
    Bare(String),
    Phrase(String),
    Group(Vec<String>),
}

fn tokenize(s: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        match bytes[i] {
            b'"' => {
                let close = find(bytes, i + 1, b'"').ok_or(ParseError::UnterminatedQuote(i))?;
                out.push(Token::Phrase(s[i + 1..close].to_string()));
                i = close + 1;
            }
            b'(' => {
                let close = find(bytes, i + 1, b')').ok_or(ParseError::UnterminatedGroup(i))?;
                out.push(Token::Group(parse_group(&s[i + 1..close])?));
                i = close + 1;
            }
            _ => {
                let start = i;
                // `near:"..."` may contain spaces inside its quotes.
                if s[i..].starts_with("near:\"") {
                    let open = i + "near:".len();
                    let close =
                        find(bytes, open + 1, b'"').ok_or(ParseError::UnterminatedQuote(open))?;
                    i = close + 1;
                } else {
                    while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                        i += 1;
                    }
                }
                out.push(Token::Bare(s[start..i].to_string()));
            }
        }
    }
    Ok(out)
}

fn find(bytes: &[u8], from: usize, needle: u8) -> Option<usize> {
    bytes[from.min(bytes.len())..]
        .iter()
        .position(|b| *b == needle)
        .map(|p| p + from)
}

fn parse_group(inner: &str) -> Result<Vec<String>, ParseError> {
    let tokens: Vec<&str> = inner.split_whitespace().collect();
    let mut words = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let expect_or = i % 2 == 1;
        match (expect_or, *t == "OR") {
            (true, true) => {}
            (false, false) => words.push(t.to_string()),
            _ => return Err(ParseError::BadGroup(inner.to_string())),
        }
    }
    if words.is_empty() || tokens.len() % 2 == 0 {
        return Err(ParseError::BadGroup(inner.to_string()));
    }
    Ok(words)
}
