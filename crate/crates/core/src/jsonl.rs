//! Line-delimited JSON helpers shared by the corpus, cache and annotation stores.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed record on line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl JsonlError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        JsonlError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, JsonlError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound)
    }
}

/// Reads every record of a line-delimited file. Blank lines are skipped;
/// line numbers in errors are 1-based. A malformed final line without a
/// terminating newline is a torn write from an interrupted append and is
/// ignored.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let text = std::fs::read_to_string(path).map_err(|e| JsonlError::io(path, e))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(record) => out.push(record),
            Err(_) if !complete && idx + 1 == lines.len() => {
                tracing::warn!(path = %path.display(), "ignoring torn final line");
            }
            Err(e) => {
                return Err(JsonlError::Malformed {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Like [`read_all`] but a missing file reads as empty.
pub fn read_all_or_empty<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    match read_all(path) {
        Err(e) if e.is_not_found() => Ok(Vec::new()),
        other => other,
    }
}

pub fn to_line<T: Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("records serialize to JSON");
    line.push('\n');
    line
}

/// Rewrites `path` with `records`, going through a temporary file and rename.
pub fn write_all<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), JsonlError> {
    let mut buf = String::new();
    for record in records {
        buf.push_str(&to_line(record));
    }
    write_atomic(path, buf.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), JsonlError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| JsonlError::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = File::create(&tmp).map_err(|e| JsonlError::io(&tmp, e))?;
        file.write_all(bytes).map_err(|e| JsonlError::io(&tmp, e))?;
        file.sync_data().map_err(|e| JsonlError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| JsonlError::io(path, e))
}

/// Truncates `path` after its last newline. Returns whether bytes were removed.
pub fn repair_torn_tail(path: &Path) -> Result<bool, JsonlError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(JsonlError::io(path, e)),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(false);
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let file = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| JsonlError::io(path, e))?;
    file.set_len(keep as u64)
        .and_then(|_| file.sync_data())
        .map_err(|e| JsonlError::io(path, e))?;
    tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncated torn final line");
    Ok(true)
}

/// Append-only writer. Every append is flushed and synced before returning.
/// Opening truncates a torn final line left by an interrupted append.
#[derive(Debug)]
pub struct Appender {
    path: PathBuf,
    file: File,
}

impl Appender {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| JsonlError::io(parent, e))?;
        }
        repair_torn_tail(path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| JsonlError::io(path, e))?;
        Ok(Appender {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), JsonlError> {
        self.append_many(std::slice::from_ref(record))
    }

    pub fn append_many<T: Serialize>(&mut self, records: &[T]) -> Result<(), JsonlError> {
        let mut buf = String::new();
        for record in records {
            buf.push_str(&to_line(record));
        }
        self.file
            .write_all(buf.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| JsonlError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Rec {
        a: u32,
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "{\"a\":1}\nnot json\n{\"a\":3}\n").unwrap();
        let err = read_all::<Rec>(&path).unwrap_err();
        match err {
            JsonlError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.jsonl");
        let mut app = Appender::open(&path).unwrap();
        app.append(&Rec { a: 1 }).unwrap();
        app.append_many(&[Rec { a: 2 }, Rec { a: 3 }]).unwrap();
        let back: Vec<Rec> = read_all(&path).unwrap();
        assert_eq!(back, vec![Rec { a: 1 }, Rec { a: 2 }, Rec { a: 3 }]);
        assert!(read_all_or_empty::<Rec>(&dir.path().join("none")).unwrap().is_empty());
    }

    #[test]
    fn torn_tail_is_ignored_then_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "{\"a\":1}\n{\"a\":2}\n{\"a\"").unwrap();
        assert_eq!(read_all::<Rec>(&path).unwrap().len(), 2);
        let mut app = Appender::open(&path).unwrap();
        app.append(&Rec { a: 3 }).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "{\"a\":1}\n{\"a\":2}\n{\"a\":3}\n"
        );
        assert!(!repair_torn_tail(&path).unwrap());
    }
}
