use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

/// Inclusive calendar-date range. Renders as `SINCE:UNTIL` in ISO form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DateRange {
    pub since: NaiveDate,
    pub until: NaiveDate,
}

impl DateRange {
    pub fn new(since: NaiveDate, until: NaiveDate) -> Self {
        Self { since, until }
    }

    pub fn single(day: NaiveDate) -> Self {
        Self::new(day, day)
    }

    pub fn is_valid(&self) -> bool {
        self.since <= self.until
    }

    pub fn contains_date(&self, day: NaiveDate) -> bool {
        self.since <= day && day <= self.until
    }

    pub fn contains(&self, other: &DateRange) -> bool {
        self.since <= other.since && other.until <= self.until
    }

    /// Number of calendar days covered; zero for an inverted range.
    pub fn num_days(&self) -> u64 {
        if self.is_valid() {
            (self.until - self.since).num_days() as u64 + 1
        } else {
            0
        }
    }

    pub fn days(&self) -> DateRangeIter {
        DateRangeIter {
            next: self.is_valid().then_some(self.since),
            until: self.until,
        }
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}",
            self.since.format("%Y-%m-%d"),
            self.until.format("%Y-%m-%d")
        )
    }
}

impl FromStr for DateRange {
    type Err = String;

    /// Accepts `SINCE:UNTIL` or `SINCE,UNTIL` with loosely formatted dates,
    /// or a single date meaning a one-day range.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parts: Vec<&str> = s.split([':', ',']).map(str::trim).collect();
        match parts.as_slice() {
            [one] => Ok(Self::single(parse_loose_date(one)?)),
            [since, until] => Ok(Self::new(parse_loose_date(since)?, parse_loose_date(until)?)),
            _ => Err(format!("expected SINCE:UNTIL, got {s:?}")),
        }
    }
}

/// Ascending iterator over the days of a [`DateRange`].
#[derive(Debug, Clone)]
pub struct DateRangeIter {
    next: Option<NaiveDate>,
    until: NaiveDate,
}

impl Iterator for DateRangeIter {
    type Item = NaiveDate;

    fn next(&mut self) -> Option<NaiveDate> {
        let current = self.next?;
        self.next = current
            .checked_add_days(Days::new(1))
            .filter(|d| *d <= self.until);
        Some(current)
    }
}

/// Parse `YYYY-M-D` (zero padding optional) or day-first `D-M-YYYY`.
pub fn parse_loose_date(s: &str) -> Result<NaiveDate, String> {
    let fields: Vec<&str> = s.trim().split(['-', '/']).collect();
    let [a, b, c] = fields.as_slice() else {
        return Err(format!("unrecognised date {s:?}"));
    };
    let num = |x: &str| x.parse::<u32>().map_err(|_| format!("unrecognised date {s:?}"));
    let (y, m, d) = if a.len() == 4 {
        (num(a)?, num(b)?, num(c)?)
    } else if c.len() == 4 {
        (num(c)?, num(b)?, num(a)?)
    } else {
        return Err(format!("unrecognised date {s:?}: no four-digit year"));
    };
    NaiveDate::from_ymd_opt(y as i32, m, d).ok_or_else(|| format!("no such date {s:?}"))
}
