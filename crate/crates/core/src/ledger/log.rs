use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{LedgerError, LedgerEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockMode {
    /// Exclusive advisory lock; required for appending.
    Write,
    /// Shared advisory lock; concurrent readers are fine.
    Read,
}

/// Newline-delimited JSON event log on disk. Holding an `EventLog` holds an
/// advisory lock on the file; a second writer fails fast.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    mode: LockMode,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LedgerError + '_ {
    move |source| LedgerError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl EventLog {
    /// Opens (creating if absent) and locks the log.
    pub fn open(path: &Path, mode: LockMode) -> Result<Self, LedgerError> {
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io_err(path))?;
        let locked = match mode {
            LockMode::Write => file.try_lock(),
            LockMode::Read => file.try_lock_shared(),
        };
        if locked.is_err() {
            return Err(LedgerError::Locked(path.display().to_string()));
        }
        Ok(EventLog {
            path: path.to_owned(),
            file,
            mode,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read(&self) -> Result<Vec<LedgerEvent>, LedgerError> {
        read_events(&self.path)
    }

    /// Appends one event and flushes it to stable storage before returning.
    pub fn append(&mut self, event: &LedgerEvent) -> Result<(), LedgerError> {
        assert_eq!(self.mode, LockMode::Write, "appending requires the write lock");
        let mut line = serde_json::to_vec(event).expect("event serialization cannot fail");
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

/// Reads every event from a log file. A missing file is an empty log.
pub fn read_events(path: &Path) -> Result<Vec<LedgerEvent>, LedgerError> {
    match File::open(path) {
        Ok(file) => parse_events(BufReader::new(file)).map_err(|e| match e {
            LedgerError::Io { source, .. } => io_err(path)(source),
            other => other,
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Parses newline-delimited events, skipping blank lines.
pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<LedgerEvent>, LedgerError> {
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|source| LedgerError::Io {
            path: String::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LedgerEvent = serde_json::from_str(&line).map_err(|e| LedgerError::Replay {
            index: events.len(),
            seq: events.len() as u64 + 1,
            reason: format!("unparseable event: {e}"),
        })?;
        events.push(event);
    }
    Ok(events)
}
