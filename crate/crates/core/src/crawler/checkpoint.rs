//! Resumable crawl position.
//!
//! A checkpoint names the next request of a crawl: the sweep step (rounds
//! times windows, round-major), the phase, and for the continuation phase the
//! cursor to send. On disk it is one line:
//! `query_hash<TAB>window_index<TAB>phase<TAB>cursor`.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::extract::CursorPosition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Rendered search page.
    Primary,
    /// Cursor-driven timeline pages.
    Continuation,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Primary => "1",
            Phase::Continuation => "2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub query_hash: String,
    pub window_index: usize,
    pub phase: Phase,
    pub cursor: CursorPosition,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("cursor {0:?} cannot be stored in a checkpoint line")]
    UnencodableCursor(String),
}

impl Checkpoint {
    pub fn start(query_hash: impl Into<String>) -> Self {
        Self {
            query_hash: query_hash.into(),
            window_index: 0,
            phase: Phase::Primary,
            cursor: CursorPosition::empty(),
        }
    }

    pub fn to_line(&self) -> Result<String, CheckpointError> {
        let c = self.cursor.as_str();
        if c.contains(['\t', '\n', '\r']) {
            return Err(CheckpointError::UnencodableCursor(c.to_string()));
        }
        Ok(format!(
            "{}\t{}\t{}\t{}",
            self.query_hash, self.window_index, self.phase, c
        ))
    }

    /// Read a checkpoint file; `None` when it does not exist.
    pub fn load(path: &Path) -> Result<Option<Self>, CheckpointError> {
        match fs::read_to_string(path) {
            Ok(s) => s.parse().map(Some),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Write via a sibling temp file and rename.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut line = self.to_line()?;
        line.push('\n');
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, line)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

impl FromStr for Checkpoint {
    type Err = CheckpointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let line = s.trim_end_matches(['\n', '\r']);
        let fields: Vec<&str> = line.split('\t').collect();
        let [hash, index, phase, cursor] = fields.as_slice() else {
            return Err(CheckpointError::Malformed(format!(
                "expected 4 tab-separated fields, got {}",
                fields.len()
            )));
        };
        if hash.is_empty() {
            return Err(CheckpointError::Malformed("empty query hash".into()));
        }
        let window_index = index
            .parse()
            .map_err(|_| CheckpointError::Malformed(format!("bad window index {index:?}")))?;
        let phase = match *phase {
            "1" => Phase::Primary,
            "2" => Phase::Continuation,
            other => return Err(CheckpointError::Malformed(format!("bad phase {other:?}"))),
        };
        if phase == Phase::Continuation && cursor.is_empty() {
            return Err(CheckpointError::Malformed(
                "continuation phase without a cursor".into(),
            ));
        }
        Ok(Self {
            query_hash: hash.to_string(),
            window_index,
            phase,
            cursor: CursorPosition::new(*cursor),
        })
    }
}
