use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::relations::Event;

pub const EVENT_LOG_FILE: &str = "events.jsonl";

/// A log line that could not be replayed. `line` is 1-based.
#[derive(Debug)]
pub struct BadLine {
    pub line: usize,
    pub detail: String,
}

/// Append-only JSON-lines file of registry events.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    /// Byte offset up to which the log has been consumed.
    offset: u64,
    /// Lines consumed so far.
    lines: usize,
}

impl EventLog {
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(EVENT_LOG_FILE);
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        Ok(Self {
            path,
            file,
            offset: 0,
            lines: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Whether another writer has appended past what this handle consumed.
    pub fn has_unread(&self) -> io::Result<bool> {
        Ok(self.file.metadata()?.len() > self.offset)
    }

    /// Reads every complete line appended since the last call. The caller must
    /// hold a lock; a torn final line is reported as corruption.
    pub(crate) fn read_new(&mut self) -> io::Result<Result<Vec<(usize, Event)>, BadLine>> {
        let mut buf = Vec::new();
        (&self.file).seek(SeekFrom::Start(self.offset))?;
        (&self.file).read_to_end(&mut buf)?;
        if buf.is_empty() {
            return Ok(Ok(Vec::new()));
        }
        let mut events = Vec::new();
        let mut consumed = 0usize;
        let mut line_no = self.lines;
        for raw in buf.split_inclusive(|b| *b == b'\n') {
            line_no += 1;
            let Some(body) = raw.strip_suffix(b"\n") else {
                return Ok(Err(BadLine {
                    line: line_no,
                    detail: "truncated line".into(),
                }));
            };
            match serde_json::from_slice::<Event>(body) {
                Ok(event) => events.push((line_no, event)),
                Err(e) => {
                    return Ok(Err(BadLine {
                        line: line_no,
                        detail: e.to_string(),
                    }))
                }
            }
            consumed += raw.len();
        }
        self.offset += consumed as u64;
        self.lines = line_no;
        Ok(Ok(events))
    }

    /// Writes `events` in one append and syncs before returning.
    pub(crate) fn append(&mut self, events: &[Event]) -> io::Result<()> {
        let mut buf = Vec::new();
        for event in events {
            serde_json::to_writer(&mut buf, event).map_err(io::Error::other)?;
            buf.push(b'\n');
        }
        (&self.file).write_all(&buf)?;
        self.file.sync_data()?;
        self.offset += buf.len() as u64;
        self.lines += events.len();
        Ok(())
    }
}
