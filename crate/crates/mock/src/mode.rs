use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    /// Unlimited access to the whole corpus.
    Scrape,
    /// Per-client quota and a bounded history window.
    RestrictedApi,
}

impl std::str::FromStr for ModeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scrape" => Ok(Self::Scrape),
            "restricted" | "restricted_api" | "restricted-api" | "api" => Ok(Self::RestrictedApi),
            other => Err(format!("unknown mode {other:?}, expected scrape or restricted")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerMode {
    pub mode: ModeKind,
    pub page_size: usize,
    pub window_quota: u32,
    pub window_seconds: f64,
    pub history_cap_days: u32,
}

impl Default for ServerMode {
    fn default() -> Self {
        Self::scrape()
    }
}

impl ServerMode {
    pub fn scrape() -> Self {
        Self {
            mode: ModeKind::Scrape,
            page_size: 20,
            window_quota: 5,
            window_seconds: 10.0,
            history_cap_days: 21,
        }
    }

    pub fn restricted(window_quota: u32, window_seconds: f64, history_cap_days: u32) -> Self {
        Self {
            mode: ModeKind::RestrictedApi,
            window_quota,
            window_seconds,
            history_cap_days,
            ..Self::scrape()
        }
    }

    pub fn is_restricted(&self) -> bool {
        self.mode == ModeKind::RestrictedApi
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.page_size == 0 {
            return Err("page size must be at least 1".into());
        }
        if self.is_restricted() {
            if self.window_quota == 0 || !self.window_seconds.is_finite() || self.window_seconds <= 0.0 {
                return Err("restricted mode needs a positive quota and window".into());
            }
            if self.history_cap_days == 0 {
                return Err("history cap must be at least one day".into());
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Duration {
        Duration::from_secs_f64(self.window_seconds)
    }
}

/// Sliding-window request quota per client.
#[derive(Debug, Default)]
pub struct RateGate {
    seen: HashMap<String, VecDeque<Instant>>,
}

impl RateGate {
    /// `Ok` admits the request; `Err` carries the wait in whole seconds.
    pub fn admit(&mut self, client: &str, quota: u32, window: Duration, now: Instant) -> Result<(), u64> {
        let q = self.seen.entry(client.to_string()).or_default();
        while q.front().is_some_and(|t| now.duration_since(*t) >= window) {
            q.pop_front();
        }
        if q.len() < quota as usize {
            q.push_back(now);
            return Ok(());
        }
        let oldest = *q.front().expect("quota is positive");
        let wait = window.saturating_sub(now.duration_since(oldest));
        Err(wait.as_secs_f64().ceil().max(1.0) as u64)
    }

    pub fn clear(&mut self) {
        self.seen.clear();
    }
}
