//! Append-only JSON-lines event log with an optional full-state snapshot.
//!
//! Layout for a store named `queue` in `dir`:
//!
//! - `queue.snapshot.json`: state as of the last compaction (may be absent)
//! - `queue.log`: one JSON event per line, appended after that snapshot
//!
//! Loading reads the snapshot and replays the log. Compaction writes a new
//! snapshot through a temp file and rename, then truncates the log.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: corrupt entry: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("{path}: cannot apply entry at line {line}: {message}")]
    Replay { path: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JournalError + '_ {
    move |source| JournalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// State that can be rebuilt by replaying events.
pub trait Replay: Default + Serialize + DeserializeOwned {
    type Event: Serialize + DeserializeOwned;
    fn apply(&mut self, event: &Self::Event) -> Result<(), String>;
}

#[derive(Debug)]
pub struct Journal<S: Replay> {
    log_path: PathBuf,
    snapshot_path: PathBuf,
    _state: PhantomData<S>,
}

impl<S: Replay> Journal<S> {
    pub fn new(dir: impl AsRef<Path>, name: &str) -> Self {
        let dir = dir.as_ref();
        Self {
            log_path: dir.join(format!("{name}.log")),
            snapshot_path: dir.join(format!("{name}.snapshot.json")),
            _state: PhantomData,
        }
    }

    #[cfg(test)]
    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    /// Rebuilds state from disk. Missing files mean empty state.
    pub fn load(&self) -> Result<S, JournalError> {
        let mut state = if self.snapshot_path.exists() {
            let text = fs::read_to_string(&self.snapshot_path).map_err(io_err(&self.snapshot_path))?;
            serde_json::from_str(&text).map_err(|e| JournalError::Corrupt {
                path: self.snapshot_path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?
        } else {
            S::default()
        };
        if self.log_path.exists() {
            let file = File::open(&self.log_path).map_err(io_err(&self.log_path))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err(&self.log_path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: S::Event = serde_json::from_str(&line).map_err(|e| JournalError::Corrupt {
                    path: self.log_path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                state.apply(&event).map_err(|message| JournalError::Replay {
                    path: self.log_path.display().to_string(),
                    line: i + 1,
                    message,
                })?;
            }
        }
        Ok(state)
    }

    /// Appends one event and syncs it to disk.
    pub fn append(&self, event: &S::Event) -> Result<(), JournalError> {
        if let Some(dir) = self.log_path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.log_path)
            .map_err(io_err(&self.log_path))?;
        file.write_all(line.as_bytes()).map_err(io_err(&self.log_path))?;
        file.sync_data().map_err(io_err(&self.log_path))
    }

    /// Writes `state` as the snapshot and empties the log.
    pub fn compact(&self, state: &S) -> Result<(), JournalError> {
        if let Some(dir) = self.snapshot_path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let tmp = self.snapshot_path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(state).expect("state serializes");
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &self.snapshot_path).map_err(io_err(&self.snapshot_path))?;
        File::create(&self.log_path).map_err(io_err(&self.log_path))?;
        Ok(())
    }

    /// Cheap change detector: (log length, snapshot length).
    pub fn fingerprint(&self) -> (u64, u64) {
        let len = |p: &Path| fs::metadata(p).map(|m| m.len()).unwrap_or(0);
        (len(&self.log_path), len(&self.snapshot_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    struct Counter {
        total: i64,
    }

    impl Replay for Counter {
        type Event = i64;
        fn apply(&mut self, e: &i64) -> Result<(), String> {
            if *e == 0 {
                return Err("zero".into());
            }
            self.total += e;
            Ok(())
        }
    }

    #[test]
    fn append_compact_reload() {
        let dir = tempfile::tempdir().unwrap();
        let j: Journal<Counter> = Journal::new(dir.path(), "c");
        assert_eq!(j.load().unwrap(), Counter::default());
        j.append(&3).unwrap();
        j.append(&4).unwrap();
        assert_eq!(j.load().unwrap().total, 7);
        j.compact(&Counter { total: 7 }).unwrap();
        assert_eq!(fs::read_to_string(j.log_path()).unwrap(), "");
        j.append(&1).unwrap();
        assert_eq!(j.load().unwrap().total, 8);
    }

    #[test]
    fn corrupt_log_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let j: Journal<Counter> = Journal::new(dir.path(), "c");
        j.append(&3).unwrap();
        fs::write(j.log_path(), "3\nnot json\n").unwrap();
        assert!(matches!(j.load(), Err(JournalError::Corrupt { line: 2, .. })));
        fs::write(j.log_path(), "0\n").unwrap();
        assert!(matches!(j.load(), Err(JournalError::Replay { line: 1, .. })));
    }
}
