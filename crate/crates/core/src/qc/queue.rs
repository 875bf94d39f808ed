use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::log::{replay, DecisionLog, DecisionRecord, ReviewState};
use super::{QcFlags, Severity};
use crate::dataset::{class_distribution, ClassDistribution, Dataset};
use crate::domain::StyleDomain;
use crate::error::{Error, Result};
use crate::transfer::TranslatorKind;

pub const AUTO_REVIEWER: &str = "auto";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRef {
    pub image_id: String,
    pub source_domain: StyleDomain,
    pub target_domain: StyleDomain,
    pub copy_index: u32,
}

impl JobRef {
    /// Output id of the generated copy: `{source_id}__{target_domain}__{copy}`.
    pub fn output_id(&self) -> String {
        format!("{}__{}__{}", self.image_id, self.target_domain, self.copy_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub job: JobRef,
    /// Content hash of everything that determines the generated image.
    pub job_key: String,
    pub translator: TranslatorKind,
    pub source_image_path: PathBuf,
    pub generated_image_path: PathBuf,
    pub flags: QcFlags,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionOutcome {
    Applied(DecisionRecord),
    /// The item was already in the requested state; nothing was logged.
    Unchanged,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
}

/// Review items plus their decision log. Items start pending; their current
/// state is always the fold of the log.
#[derive(Debug)]
pub struct ReviewQueue {
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
    states: HashMap<String, ReviewState>,
    log: DecisionLog,
    items_file: Option<(PathBuf, File)>,
}

impl ReviewQueue {
    pub fn in_memory() -> Self {
        ReviewQueue {
            items: Vec::new(),
            index: HashMap::new(),
            states: HashMap::new(),
            log: DecisionLog::in_memory(),
            items_file: None,
        }
    }

    /// Opens the item file (one JSON item per line) and the decision log,
    /// creating both if absent, and replays the log.
    pub fn open(items_path: &Path, log_path: &Path) -> Result<Self> {
        let bytes = match fs::read(items_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(items_path, e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let mut items = Vec::new();
        for (n, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let item: ReviewItem = serde_json::from_slice(line).map_err(|e| Error::Format {
                path: items_path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            items.push(item);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(items_path)
            .map_err(|e| Error::io(items_path, e))?;
        if complete < bytes.len() {
            file.set_len(complete as u64).map_err(|e| Error::io(items_path, e))?;
        }
        let log = DecisionLog::open(log_path)?;
        let states = replay(items.iter().map(|i| i.item_id.as_str()), log.records())
            .map_err(|e| e.in_file(log_path))?;
        let mut index = HashMap::new();
        for (i, item) in items.iter().enumerate() {
            if index.insert(item.item_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(item.item_id.clone()).in_file(items_path));
            }
        }
        Ok(ReviewQueue {
            items,
            index,
            states,
            log,
            items_file: Some((items_path.to_path_buf(), file)),
        })
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    pub fn get(&self, item_id: &str) -> Option<&ReviewItem> {
        self.index.get(item_id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.index.contains_key(item_id)
    }

    pub fn state(&self, item_id: &str) -> Option<ReviewState> {
        self.states.get(item_id).copied()
    }

    pub fn states(&self) -> &HashMap<String, ReviewState> {
        &self.states
    }

    pub fn log(&self) -> &DecisionLog {
        &self.log
    }

    pub fn items_in(&self, state: ReviewState) -> impl Iterator<Item = &ReviewItem> {
        self.items
            .iter()
            .filter(move |i| self.states.get(&i.item_id) == Some(&state))
    }

    pub fn counts(&self) -> StateCounts {
        let mut c = StateCounts::default();
        for s in self.states.values() {
            match s {
                ReviewState::Pending => c.pending += 1,
                ReviewState::Accepted => c.accepted += 1,
                ReviewState::Rejected => c.rejected += 1,
            }
        }
        c
    }

    fn add_item(&mut self, item: ReviewItem) -> Result<()> {
        if self.index.contains_key(&item.item_id) {
            return Err(Error::DuplicateId(item.item_id));
        }
        if let Some((path, file)) = self.items_file.as_mut() {
            let mut line = serde_json::to_vec(&item).expect("item serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| Error::io(&*path, e))?;
            file.sync_data().map_err(|e| Error::io(&*path, e))?;
        }
        self.index.insert(item.item_id.clone(), self.items.len());
        self.states.insert(item.item_id.clone(), ReviewState::Pending);
        self.items.push(item);
        Ok(())
    }

    /// Adds items as pending; items flagged `block` are immediately rejected
    /// by the `auto` reviewer, which a human can revert.
    pub fn enqueue(&mut self, items: Vec<ReviewItem>) -> Result<()> {
        for item in items {
            let blocked = item.flags.severity == Severity::Block;
            let id = item.item_id.clone();
            self.add_item(item)?;
            if blocked {
                self.record_decision(&id, ReviewState::Rejected, AUTO_REVIEWER, None)?;
            }
        }
        Ok(())
    }

    /// Applies one decision. Re-submitting the current state is a no-op.
    /// With `expected_prior`, a mismatch against the current state is a
    /// conflict (someone else decided first).
    pub fn record_decision(
        &mut self,
        item_id: &str,
        new_state: ReviewState,
        reviewer: &str,
        expected_prior: Option<ReviewState>,
    ) -> Result<DecisionOutcome> {
        let current = self
            .state(item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
        if current == new_state {
            return Ok(DecisionOutcome::Unchanged);
        }
        if let Some(expected) = expected_prior {
            if expected != current {
                return Err(Error::Conflict {
                    item_id: item_id.to_string(),
                    expected: expected.to_string(),
                    actual: current.to_string(),
                });
            }
        }
        if !current.can_transition_to(new_state) {
            return Err(Error::IllegalTransition {
                item_id: item_id.to_string(),
                from: current.to_string(),
                to: new_state.to_string(),
            });
        }
        let record = DecisionRecord {
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            item_id: item_id.to_string(),
            prior_state: current,
            new_state,
            reviewer: reviewer.to_string(),
        };
        self.log.append(record.clone())?;
        self.states.insert(item_id.to_string(), new_state);
        Ok(DecisionOutcome::Applied(record))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub counts: StateCounts,
    /// Original counts plus every accepted or pending copy.
    pub predicted: ClassDistribution,
    pub ratio: Option<f64>,
}

pub fn review_summary(queue: &ReviewQueue, dataset: &Dataset) -> Result<ReviewSummary> {
    let mut predicted = class_distribution(dataset);
    for item in queue.items() {
        if queue.state(&item.item_id) == Some(ReviewState::Rejected) {
            continue;
        }
        let record = dataset
            .get(&item.job.image_id)
            .ok_or_else(|| Error::UnknownImage(item.job.image_id.clone()))?;
        predicted.add_scaled(&record.class_counts(dataset.vocabulary()), 1);
    }
    Ok(ReviewSummary {
        counts: queue.counts(),
        ratio: predicted.imbalance_ratio(),
        predicted,
    })
}
