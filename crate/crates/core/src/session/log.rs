use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{LogRecord, SessionError, SessionResult};

/// Append-only JSON-lines event log.
///
/// Each append is serialized in full and written with a single `write_all`
/// under a mutex, so concurrent writers never interleave within a record.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl EventLog {
    pub fn open(path: impl AsRef<Path>) -> SessionResult<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self { path, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[LogRecord]) -> SessionResult<()> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for record in records {
            serde_json::to_writer(&mut buf, record).map_err(|e| SessionError::Io(e.to_string()))?;
            buf.push(b'\n');
        }
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(&buf)
            .and_then(|_| file.flush())
            .map_err(|e| SessionError::Io(format!("{}: {e}", self.path.display())))
    }

    pub fn sync(&self) -> SessionResult<()> {
        let file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.sync_all().map_err(|e| SessionError::Io(e.to_string()))
    }

    /// Reads every record; a missing file is an empty log.
    pub fn read_all(path: impl AsRef<Path>) -> SessionResult<Vec<LogRecord>> {
        let path = path.as_ref();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(SessionError::Io(format!("{}: {e}", path.display()))),
        };
        let mut out = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SessionError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line)
                .map_err(|e| SessionError::Replay(format!("line {}: {e}", n + 1)))?;
            out.push(record);
        }
        Ok(out)
    }
}
