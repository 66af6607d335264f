//! Tag-selector extraction of posts and continuation cursors.
//!
//! The rendered page contract:
//!
//! ```html
//! <div class="stream-container" data-max-position="CURSOR">
//!   <div class="tweet" data-tweet-id="ID" data-time="UNIX_SECONDS"
//!        data-author="NAME" data-geo="LAT,LON,PLACE">
//!     <p class="tweet-text">TEXT</p>
//!   </div>
//! </div>
//! ```
//!
//! `data-geo` is optional. Which elements and attributes are read is fixed by
//! a [`SelectorTable`], so a different markup only needs a different table.

use std::fmt;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};

/// One extracted post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub geodata: Option<GeoData>,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoData {
    pub latitude: f64,
    pub longitude: f64,
    pub place_name: String,
}

impl GeoData {
    /// `lat,lon,place` as carried in the `data-geo` attribute.
    pub fn to_attr(&self) -> String {
        format!("{},{},{}", self.latitude, self.longitude, self.place_name)
    }

    pub fn from_attr(s: &str) -> Option<Self> {
        let mut parts = s.splitn(3, ',');
        let latitude: f64 = parts.next()?.trim().parse().ok()?;
        let longitude: f64 = parts.next()?.trim().parse().ok()?;
        let place_name = parts.next()?.trim().to_string();
        let in_range = (-90.0..=90.0).contains(&latitude) && (-180.0..=180.0).contains(&longitude);
        in_range.then_some(Self {
            latitude,
            longitude,
            place_name,
        })
    }
}

/// Opaque pagination token. Empty means there is no further page.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CursorPosition(String);

impl CursorPosition {
    pub fn new(token: impl Into<String>) -> Self {
        Self(token.into())
    }

    pub fn empty() -> Self {
        Self(String::new())
    }

    pub fn is_exhausted(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CursorPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Body of a timeline (continuation) response. Key names are fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuationPayload {
    pub items_html: String,
    pub min_position: CursorPosition,
    pub has_more_items: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("payload is not HTML")]
    Unreadable,
    #[error("malformed continuation payload: {0}")]
    MalformedPayload(String),
    #[error("invalid selector {selector:?}: {reason}")]
    BadSelector { selector: String, reason: String },
}

/// Tweets of one page plus the number of containers that had to be skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractedPage {
    pub tweets: Vec<Tweet>,
    pub skipped: usize,
    pub cursor: CursorPosition,
}

/// Which elements and attributes carry each field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorTable {
    pub tweet_container: String,
    pub text: String,
    pub id_attr: String,
    pub time_attr: String,
    pub author_attr: String,
    pub geo_attr: String,
    pub stream_container: String,
    pub cursor_attr: String,
}

impl Default for SelectorTable {
    fn default() -> Self {
        Self {
            tweet_container: "div.tweet".into(),
            text: "p.tweet-text".into(),
            id_attr: "data-tweet-id".into(),
            time_attr: "data-time".into(),
            author_attr: "data-author".into(),
            geo_attr: "data-geo".into(),
            stream_container: "div.stream-container".into(),
            cursor_attr: "data-max-position".into(),
        }
    }
}

/// Compiled form of a [`SelectorTable`].
#[derive(Debug)]
pub struct Extractor {
    table: SelectorTable,
    container: Selector,
    text: Selector,
    stream: Selector,
}

static DEFAULT_EXTRACTOR: LazyLock<Extractor> =
    LazyLock::new(|| Extractor::new(SelectorTable::default()).expect("default selectors compile"));

impl Extractor {
    pub fn new(table: SelectorTable) -> Result<Self, ExtractError> {
        let compile = |s: &str| {
            Selector::parse(s).map_err(|e| ExtractError::BadSelector {
                selector: s.to_string(),
                reason: e.to_string(),
            })
        };
        Ok(Self {
            container: compile(&table.tweet_container)?,
            text: compile(&table.text)?,
            stream: compile(&table.stream_container)?,
            table,
        })
    }

    /// The shared extractor for the default page contract.
    pub fn standard() -> &'static Extractor {
        &DEFAULT_EXTRACTOR
    }

    pub fn table(&self) -> &SelectorTable {
        &self.table
    }

    /// Tweets and cursor of a rendered page, parsing the document once.
    pub fn extract_page(&self, html: &str) -> Result<ExtractedPage, ExtractError> {
        if html.trim().is_empty() {
            return Ok(ExtractedPage::default());
        }
        check_readable(html)?;
        let doc = Html::parse_document(html);
        let (tweets, skipped) = self.tweets_in(&doc);
        Ok(ExtractedPage {
            tweets,
            skipped,
            cursor: self.cursor_in(&doc),
        })
    }

    pub fn extract_tweets(&self, html: &str) -> Result<ExtractedPage, ExtractError> {
        if html.trim().is_empty() {
            return Ok(ExtractedPage::default());
        }
        check_readable(html)?;
        let doc = Html::parse_fragment(html);
        let (tweets, skipped) = self.tweets_in(&doc);
        Ok(ExtractedPage {
            tweets,
            skipped,
            cursor: CursorPosition::empty(),
        })
    }

    pub fn extract_cursor(&self, html: &str) -> CursorPosition {
        self.cursor_in(&Html::parse_document(html))
    }

    fn cursor_in(&self, doc: &Html) -> CursorPosition {
        doc.select(&self.stream)
            .find_map(|el| el.value().attr(&self.table.cursor_attr))
            .map(|v| CursorPosition::new(v.trim()))
            .unwrap_or_default()
    }

    fn tweets_in(&self, doc: &Html) -> (Vec<Tweet>, usize) {
        let mut tweets = Vec::new();
        let mut skipped = 0;
        for el in doc.select(&self.container) {
            match self.tweet_from(el) {
                Some(t) => tweets.push(t),
                None => skipped += 1,
            }
        }
        (tweets, skipped)
    }

    fn tweet_from(&self, el: ElementRef<'_>) -> Option<Tweet> {
        // A container that swallowed another container lost its closing tags.
        let swallowed = el
            .descendants()
            .skip(1)
            .filter_map(ElementRef::wrap)
            .any(|d| self.container.matches(&d));
        if swallowed {
            return None;
        }

        let attr = |name: &str| el.value().attr(name).map(str::trim).filter(|v| !v.is_empty());
        let id = attr(&self.table.id_attr)?.to_string();
        let author = attr(&self.table.author_attr)?.to_string();
        let created_at = parse_time(attr(&self.table.time_attr)?)?;
        let geodata = match el.value().attr(&self.table.geo_attr) {
            None => None,
            Some(raw) => Some(GeoData::from_attr(raw)?),
        };
        let text_el = el.select(&self.text).next()?;
        let text: String = text_el
            .text()
            .collect::<String>()
            .chars()
            .filter(|c| *c != '<' && *c != '>')
            .collect();

        Some(Tweet {
            id,
            text: text.trim().to_string(),
            created_at,
            geodata,
            author,
        })
    }
}

fn check_readable(body: &str) -> Result<(), ExtractError> {
    let trimmed = body.trim_start_matches('\u{feff}').trim_start();
    if !trimmed.starts_with('<') || body.contains('\0') {
        return Err(ExtractError::Unreadable);
    }
    Ok(())
}

fn parse_time(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(secs) = raw.parse::<i64>() {
        return DateTime::from_timestamp(secs, 0);
    }
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

/// Tweets of an HTML page or fragment, using the default selector table.
pub fn extract_tweets(html: &str) -> Result<ExtractedPage, ExtractError> {
    DEFAULT_EXTRACTOR.extract_tweets(html)
}

/// Cursor attribute of the results container, empty when absent.
pub fn extract_cursor(html: &str) -> CursorPosition {
    DEFAULT_EXTRACTOR.extract_cursor(html)
}

pub fn extract_page(html: &str) -> Result<ExtractedPage, ExtractError> {
    DEFAULT_EXTRACTOR.extract_page(html)
}

pub fn parse_continuation(body: &str) -> Result<ContinuationPayload, ExtractError> {
    serde_json::from_str(body).map_err(|e| ExtractError::MalformedPayload(e.to_string()))
}
