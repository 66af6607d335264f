use std::fmt;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use url::Url;

use super::{compose_query_string, DateRange, QueryArguments, QueryError};
use crate::extract::CursorPosition;

/// Everything but RFC 3986 unreserved characters; space becomes `%20`.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

pub fn encode_component(s: &str) -> String {
    utf8_percent_encode(s, COMPONENT).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndpointKind {
    /// Rendered HTML search page.
    Primary,
    /// Incremental timeline feed driven by `min_position`.
    Continuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointUrl {
    pub kind: EndpointKind,
    pub full_url: String,
}

impl EndpointUrl {
    pub fn as_str(&self) -> &str {
        &self.full_url
    }

    /// Decoded value of a query parameter.
    pub fn query_param(&self, name: &str) -> Option<String> {
        let parsed = Url::parse(&self.full_url).ok()?;
        parsed
            .query_pairs()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.into_owned())
    }
}

impl fmt::Display for EndpointUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.full_url)
    }
}

/// The two search endpoints under a configurable host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchEndpoints {
    base: String,
}

impl SearchEndpoints {
    /// `base` is an absolute http(s) URL such as `http://localhost:9900`.
    pub fn new(base: &str) -> Result<Self, url::ParseError> {
        let parsed = Url::parse(base)?;
        if parsed.cannot_be_a_base() || !matches!(parsed.scheme(), "http" | "https") {
            return Err(url::ParseError::RelativeUrlWithCannotBeABaseBase);
        }
        let mut base = parsed.to_string();
        while base.ends_with('/') {
            base.pop();
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn primary(&self, q: &QueryArguments, window: DateRange) -> Result<EndpointUrl, QueryError> {
        let query = compose_query_string(q, window)?;
        Ok(EndpointUrl {
            kind: EndpointKind::Primary,
            full_url: format!(
                "{}/search?f=tweets&vertical=default&q={}",
                self.base,
                encode_component(&query)
            ),
        })
    }

    pub fn continuation(
        &self,
        q: &QueryArguments,
        window: DateRange,
        cursor: &CursorPosition,
    ) -> Result<EndpointUrl, QueryError> {
        if cursor.is_exhausted() {
            return Err(QueryError::EmptyCursor);
        }
        let query = compose_query_string(q, window)?;
        Ok(EndpointUrl {
            kind: EndpointKind::Continuation,
            full_url: format!(
                "{}/i/search/timeline?f=tweets&vertical=default&q={}&src=typd&min_position={}",
                self.base,
                encode_component(&query),
                encode_component(cursor.as_str())
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn trump() -> (QueryArguments, DateRange) {
        let w = DateRange::single(NaiveDate::from_ymd_opt(2016, 1, 2).unwrap());
        (QueryArguments::new(w).with_all_words(["trump"]).with_k_rounds(4), w)
    }

    fn mock() -> SearchEndpoints {
        SearchEndpoints::new("http://localhost:9900/").unwrap()
    }

    #[test]
    fn primary_url_for_table2_query() {
        let (q, w) = trump();
        let url = mock().primary(&q, w).unwrap();
        assert_eq!(
            url.as_str(),
            "http://localhost:9900/search?f=tweets&vertical=default&q=trump%20since%3A2016-01-02%20until%3A2016-01-02"
        );
        assert_eq!(url.kind, EndpointKind::Primary);
        assert_eq!(
            url.query_param("q").unwrap(),
            compose_query_string(&q, w).unwrap()
        );
    }

    #[test]
    fn hash_is_encoded() {
        let (mut q, w) = trump();
        q.hashtags = vec!["#maga".into()];
        let url = mock().primary(&q, w).unwrap();
        assert!(url.as_str().contains("%23maga"));
        assert!(!url.as_str().contains('#'));
    }

    #[test]
    fn continuation_url() {
        let (q, w) = trump();
        let url = mock()
            .continuation(&q, w, &CursorPosition::new("TWEET-900-1000"))
            .unwrap();
        assert!(url.as_str().starts_with("http://localhost:9900/i/search/timeline?f=tweets&vertical=default&q=trump%20"));
        assert!(url.as_str().ends_with("&src=typd&min_position=TWEET-900-1000"));

        let eq = mock().continuation(&q, w, &CursorPosition::new("a=b")).unwrap();
        assert!(eq.as_str().ends_with("min_position=a%3Db"));
        assert_eq!(eq.query_param("min_position").as_deref(), Some("a=b"));
    }

    #[test]
    fn cursors_only_change_min_position() {
        let (q, w) = trump();
        let a = mock().continuation(&q, w, &CursorPosition::new("c1")).unwrap();
        let b = mock().continuation(&q, w, &CursorPosition::new("c2")).unwrap();
        let (pa, sa) = a.as_str().rsplit_once('=').unwrap();
        let (pb, sb) = b.as_str().rsplit_once('=').unwrap();
        assert_eq!(pa, pb);
        assert_ne!(sa, sb);
    }

    #[test]
    fn empty_cursor_is_an_error() {
        let (q, w) = trump();
        assert_eq!(
            mock().continuation(&q, w, &CursorPosition::empty()),
            Err(QueryError::EmptyCursor)
        );
    }

    #[test]
    fn base_must_be_http() {
        assert!(SearchEndpoints::new("localhost:9900").is_err());
        assert!(SearchEndpoints::new("mailto:x@y").is_err());
        assert_eq!(
            SearchEndpoints::new("https://example.org/proxy/").unwrap().base(),
            "https://example.org/proxy"
        );
    }
}
