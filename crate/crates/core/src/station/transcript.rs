//! Per-session transcripts: every frame in and out of the station, in order,
//! bracketed by the session context and the final outcome.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::protocol::{
    decode_message, DecodeError, ProtocolMessage, SessionContext, SessionOutcome,
};

pub const TRANSCRIPTS_DIR: &str = "transcripts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Meta {
        timestamp: DateTime<Utc>,
        session_id: String,
        context: SessionContext,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        peer: Option<String>,
    },
    In {
        timestamp: DateTime<Utc>,
        frame: Value,
    },
    Out {
        timestamp: DateTime<Utc>,
        frame: Value,
    },
    Outcome {
        timestamp: DateTime<Utc>,
        outcome: SessionOutcome,
    },
}

impl TranscriptEntry {
    pub fn timestamp(&self) -> DateTime<Utc> {
        match self {
            Self::Meta { timestamp, .. }
            | Self::In { timestamp, .. }
            | Self::Out { timestamp, .. }
            | Self::Outcome { timestamp, .. } => *timestamp,
        }
    }
}

/// Parsed form of a raw frame for the transcript: the JSON object when the
/// bytes are JSON, otherwise the lossy text.
pub(crate) fn frame_value(raw: &[u8]) -> Value {
    let body = raw.strip_suffix(b"\n").unwrap_or(raw);
    serde_json::from_slice(body)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(body).into_owned()))
}

/// Re-frames a transcript value so it can go back through the codec.
pub fn decode_frame(frame: &Value) -> Result<ProtocolMessage, DecodeError> {
    let mut line = serde_json::to_vec(frame).expect("JSON values always serialize");
    line.push(b'\n');
    decode_message(&line)
}

pub fn transcript_path(data_dir: &Path, session_id: &str) -> PathBuf {
    data_dir
        .join(TRANSCRIPTS_DIR)
        .join(format!("{session_id}.jsonl"))
}

pub(crate) struct TranscriptWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TranscriptWriter {
    pub fn create(path: PathBuf) -> io::Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let out = BufWriter::new(File::create(&path)?);
        Ok(Self { path, out })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, entry: &TranscriptEntry) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, entry).map_err(io::Error::other)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub path: PathBuf,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn read(path: &Path) -> io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let entry = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                )
            })?;
            entries.push(entry);
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    /// All transcripts under `<data_dir>/transcripts`, sorted by file name.
    pub fn read_all(data_dir: &Path) -> io::Result<Vec<Self>> {
        let dir = data_dir.join(TRANSCRIPTS_DIR);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::read(p)).collect()
    }

    pub fn session_id(&self) -> Option<&str> {
        self.entries.iter().find_map(|e| match e {
            TranscriptEntry::Meta { session_id, .. } => Some(session_id.as_str()),
            _ => None,
        })
    }

    pub fn context(&self) -> Option<&SessionContext> {
        self.entries.iter().find_map(|e| match e {
            TranscriptEntry::Meta { context, .. } => Some(context),
            _ => None,
        })
    }

    pub fn outcome(&self) -> Option<&SessionOutcome> {
        self.entries.iter().rev().find_map(|e| match e {
            TranscriptEntry::Outcome { outcome, .. } => Some(outcome),
            _ => None,
        })
    }

    pub fn inbound(&self) -> Vec<&Value> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::In { frame, .. } => Some(frame),
                _ => None,
            })
            .collect()
    }

    pub fn outbound(&self) -> Vec<&Value> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::Out { frame, .. } => Some(frame),
                _ => None,
            })
            .collect()
    }

    pub fn started_at(&self) -> Option<DateTime<Utc>> {
        self.entries.first().map(TranscriptEntry::timestamp)
    }

    pub fn finished_at(&self) -> Option<DateTime<Utc>> {
        self.entries.last().map(TranscriptEntry::timestamp)
    }
}
