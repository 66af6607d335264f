//! JSONL, CSV and plain-text exports of a store.
//!
//! All three formats list items newest first (ties broken by id, newest
//! first), so the same store yields the same id sequence in every format.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ItemStore, StoredItem};
use crate::extract::GeoData;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad record on line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExportFormat {
    #[default]
    Jsonl,
    Csv,
    Text,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" | "json" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            "txt" | "text" => Ok(Self::Text),
            other => Err(format!("unknown format {other:?}, expected jsonl, csv or txt")),
        }
    }
}

/// One line of the JSONL export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub geo: Option<ExportGeo>,
    pub author: String,
    pub query_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportGeo {
    pub lat: f64,
    pub lon: f64,
    pub place: String,
}

impl From<&StoredItem> for ExportRecord {
    fn from(item: &StoredItem) -> Self {
        let t = &item.tweet;
        Self {
            id: t.id.clone(),
            text: t.text.clone(),
            created_at: t.created_at,
            geo: t.geodata.as_ref().map(|g: &GeoData| ExportGeo {
                lat: g.latitude,
                lon: g.longitude,
                place: g.place_name.clone(),
            }),
            author: t.author.clone(),
            query_hash: item.query_hash.clone(),
        }
    }
}

fn compare_ids(a: &str, b: &str) -> Ordering {
    // Numeric-looking ids compare by magnitude.
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// Items ordered newest first.
pub fn sorted_for_export(items: &[StoredItem]) -> Vec<&StoredItem> {
    let mut v: Vec<&StoredItem> = items.iter().collect();
    v.sort_by(|a, b| {
        b.tweet
            .created_at
            .cmp(&a.tweet.created_at)
            .then_with(|| compare_ids(&b.tweet.id, &a.tweet.id))
    });
    v
}

pub fn write_jsonl_to<W: Write>(items: &[StoredItem], out: W) -> Result<usize, ExportError> {
    let mut out = BufWriter::new(out);
    let sorted = sorted_for_export(items);
    for item in &sorted {
        serde_json::to_writer(&mut out, &ExportRecord::from(*item)).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(sorted.len())
}

pub fn write_csv_to<W: Write>(items: &[StoredItem], out: W) -> Result<usize, ExportError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["id", "text", "created_at", "lat", "lon", "place", "author"])?;
    let sorted = sorted_for_export(items);
    for item in &sorted {
        let t = &item.tweet;
        let (lat, lon, place) = match &t.geodata {
            Some(g) => (g.latitude.to_string(), g.longitude.to_string(), g.place_name.clone()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            t.id.as_str(),
            t.text.as_str(),
            &rfc3339(&t.created_at),
            &lat,
            &lon,
            &place,
            t.author.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(sorted.len())
}

pub fn write_plaintext_to<W: Write>(items: &[StoredItem], out: W) -> Result<usize, ExportError> {
    let mut out = BufWriter::new(out);
    let sorted = sorted_for_export(items);
    for item in &sorted {
        let line = item
            .tweet
            .text
            .replace("\r\n", " ")
            .replace(['\n', '\r'], " ");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(sorted.len())
}

fn rfc3339(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

pub fn write_jsonl<S: ItemStore + ?Sized>(store: &S, path: &Path) -> Result<usize, ExportError> {
    write_jsonl_to(store.items(), File::create(path)?)
}

pub fn write_csv<S: ItemStore + ?Sized>(store: &S, path: &Path) -> Result<usize, ExportError> {
    write_csv_to(store.items(), File::create(path)?)
}

pub fn write_plaintext<S: ItemStore + ?Sized>(store: &S, path: &Path) -> Result<usize, ExportError> {
    write_plaintext_to(store.items(), File::create(path)?)
}

pub fn write_export<S: ItemStore + ?Sized>(
    store: &S,
    path: &Path,
    format: ExportFormat,
) -> Result<usize, ExportError> {
    match format {
        ExportFormat::Jsonl => write_jsonl(store, path),
        ExportFormat::Csv => write_csv(store, path),
        ExportFormat::Text => write_plaintext(store, path),
    }
}

/// Read back a JSONL export.
pub fn read_jsonl<R: io::Read>(input: R) -> Result<Vec<ExportRecord>, ExportError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| ExportError::BadRecord {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}
