//! Append-only decision log. One JSON record per line; a line without its
//! terminating newline is a torn write and is ignored on replay.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    Accepted,
    Rejected,
}

impl ReviewState {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReviewState::Pending => "pending",
            ReviewState::Accepted => "accepted",
            ReviewState::Rejected => "rejected",
        }
    }

    /// Decisions move pending items to a verdict; reverts move a verdict
    /// back to pending.
    pub fn can_transition_to(&self, next: ReviewState) -> bool {
        use ReviewState::*;
        matches!(
            (self, next),
            (Pending, Accepted) | (Pending, Rejected) | (Accepted, Pending) | (Rejected, Pending)
        )
    }
}

impl fmt::Display for ReviewState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReviewState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(ReviewState::Pending),
            "accepted" => Ok(ReviewState::Accepted),
            "rejected" => Ok(ReviewState::Rejected),
            other => Err(Error::InvalidArgument(format!("unknown review state `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// RFC 3339.
    pub timestamp: String,
    pub item_id: String,
    pub prior_state: ReviewState,
    pub new_state: ReviewState,
    pub reviewer: String,
}

/// Folds `records` over items that all start pending. Every record must name
/// a known item, match its current state, and make a legal transition.
pub fn replay<'a>(
    item_ids: impl IntoIterator<Item = &'a str>,
    records: &[DecisionRecord],
) -> Result<HashMap<String, ReviewState>> {
    let mut states: HashMap<String, ReviewState> = item_ids
        .into_iter()
        .map(|id| (id.to_string(), ReviewState::Pending))
        .collect();
    for (index, r) in records.iter().enumerate() {
        let corrupt = |message: String| Error::CorruptLog { index, message };
        let current = states
            .get_mut(&r.item_id)
            .ok_or_else(|| corrupt(format!("unknown item `{}`", r.item_id)))?;
        if *current != r.prior_state {
            return Err(corrupt(format!(
                "`{}` is {current}, record expects {}",
                r.item_id, r.prior_state
            )));
        }
        if !current.can_transition_to(r.new_state) {
            return Err(corrupt(format!(
                "illegal transition {} -> {} for `{}`",
                r.prior_state, r.new_state, r.item_id
            )));
        }
        *current = r.new_state;
    }
    Ok(states)
}

#[derive(Debug)]
pub struct DecisionLog {
    records: Vec<DecisionRecord>,
    file: Option<(PathBuf, File)>,
}

impl DecisionLog {
    pub fn in_memory() -> Self {
        DecisionLog {
            records: Vec::new(),
            file: None,
        }
    }

    /// Opens (or creates) a log file for appending. A torn final line is
    /// cut off so new records start on a fresh line.
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(path, e)),
        };
        let (records, complete_len) = Self::parse(&bytes)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if complete_len < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of torn trailing record",
                path.display(),
                bytes.len() - complete_len
            );
            file.set_len(complete_len as u64).map_err(|e| Error::io(path, e))?;
        }
        Ok(DecisionLog {
            records,
            file: Some((path.to_path_buf(), file)),
        })
    }

    /// Reads a log without opening it for writing.
    pub fn read(path: &Path) -> Result<Vec<DecisionRecord>> {
        match fs::read(path) {
            Ok(b) => Ok(Self::parse(&b)?.0),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Parses newline-terminated records; returns them with the byte length
    /// of the complete prefix.
    pub fn parse(bytes: &[u8]) -> Result<(Vec<DecisionRecord>, usize)> {
        let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let mut records = Vec::new();
        for (index, line) in bytes[..complete_len].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let rec: DecisionRecord = serde_json::from_slice(line).map_err(|e| Error::CorruptLog {
                index,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok((records, complete_len))
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Appends and syncs one record.
    pub fn append(&mut self, record: DecisionRecord) -> Result<()> {
        if let Some((path, file)) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| Error::io(&*path, e))?;
            file.sync_data().map_err(|e| Error::io(&*path, e))?;
        }
        self.records.push(record);
        Ok(())
    }
}
