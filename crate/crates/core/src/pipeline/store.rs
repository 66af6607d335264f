use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{AppendOutcome, ItemStore, StoreError, StoredItem};

/// In-memory store.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    items: Vec<StoredItem>,
    keys: HashSet<(String, String)>,
}

impl MemoryStore {
    fn contains(&self, item: &StoredItem) -> bool {
        self.keys
            .contains(&(item.query_hash.clone(), item.tweet.id.clone()))
    }

    fn push(&mut self, item: StoredItem) {
        self.keys
            .insert((item.query_hash.clone(), item.tweet.id.clone()));
        self.items.push(item);
    }
}

impl ItemStore for MemoryStore {
    fn dedupe_append(&mut self, item: StoredItem) -> Result<AppendOutcome, StoreError> {
        if self.contains(&item) {
            return Ok(AppendOutcome::Duplicate);
        }
        self.push(item);
        Ok(AppendOutcome::Appended)
    }

    fn append_raw(&mut self, item: StoredItem) -> Result<(), StoreError> {
        self.push(item);
        Ok(())
    }

    fn items(&self) -> &[StoredItem] {
        &self.items
    }
}

/// Append-only JSON-lines file of [`StoredItem`]s with an in-memory index.
///
/// Reopening an existing file restores its contents, so an interrupted crawl
/// can keep appending to the same store.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    file: File,
    mem: MemoryStore,
}

impl FileStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut mem = MemoryStore::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let item: StoredItem =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        line: i + 1,
                        reason: e.to_string(),
                    })?;
                mem.push(item);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file, mem })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_line(&mut self, item: &StoredItem) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(item).expect("stored items serialize");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

impl ItemStore for FileStore {
    fn dedupe_append(&mut self, item: StoredItem) -> Result<AppendOutcome, StoreError> {
        if self.mem.contains(&item) {
            return Ok(AppendOutcome::Duplicate);
        }
        self.write_line(&item)?;
        self.mem.push(item);
        Ok(AppendOutcome::Appended)
    }

    fn append_raw(&mut self, item: StoredItem) -> Result<(), StoreError> {
        self.write_line(&item)?;
        self.mem.push(item);
        Ok(())
    }

    fn items(&self) -> &[StoredItem] {
        self.mem.items()
    }
}
