//! Page rendering per the page contract.

use sha2::{Digest, Sha256};

use crate::corpus::MockTweet;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

pub fn tweet_html(t: &MockTweet) -> String {
    let tw = &t.tweet;
    let geo = tw
        .geodata
        .as_ref()
        .map(|g| format!(" data-geo=\"{}\"", escape(&g.to_attr())))
        .unwrap_or_default();
    format!(
        "<div class=\"tweet\" data-tweet-id=\"{}\" data-time=\"{}\" data-author=\"{}\"{geo}>\
         <p class=\"tweet-text\">{}</p></div>\n",
        escape(&tw.id),
        tw.created_at.timestamp(),
        escape(&tw.author),
        escape(&tw.text)
    )
}

pub fn items_html(page: &[&MockTweet]) -> String {
    page.iter().map(|t| tweet_html(t)).collect()
}

pub fn search_page(page: &[&MockTweet], cursor: Option<&str>) -> String {
    let attr = cursor
        .map(|c| format!(" data-max-position=\"{}\"", escape(c)))
        .unwrap_or_default();
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Search</title></head>\n<body>\n\
         <div class=\"stream-container\"{attr}>\n{}</div>\n</body></html>\n",
        items_html(page)
    )
}

/// First 12 hex characters of sha256 over the raw query string.
pub fn query_tag(q: &str) -> String {
    hex::encode(&Sha256::digest(q.as_bytes())[..6])
}

/// `H-{tag}-{last id}`.
pub fn encode_cursor(q: &str, last_id: u64) -> String {
    format!("H-{}-{}", query_tag(q), last_id)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CursorError {
    #[error("garbled cursor {0:?}")]
    Garbled(String),
    #[error("cursor does not belong to this query")]
    Foreign,
}

pub fn decode_cursor(q: &str, token: &str) -> Result<u64, CursorError> {
    let garbled = || CursorError::Garbled(token.to_string());
    let rest = token.strip_prefix("H-").ok_or_else(garbled)?;
    let (tag, id) = rest.split_once('-').ok_or_else(garbled)?;
    if tag.len() != 12 || !tag.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(garbled());
    }
    let id: u64 = id.parse().map_err(|_| garbled())?;
    if tag != query_tag(q) {
        return Err(CursorError::Foreign);
    }
    Ok(id)
}
