//! The append-only interaction record and its newline-delimited file form.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::kg::NodeId;
use crate::query::IntentCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    IncludeNode,
    ExcludeNode,
    Apply,
    Undo,
    TextQuery,
    ClarificationAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Staged,
    Applied,
    Undone,
}

/// A user decision that is not a plain message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Answer {
    ResolveConflict { conflict: String, keep: String },
    ConfirmLearned { signature: String, accept: bool },
    Clarify { term: String, choice: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Node(NodeId),
    Text(String),
    Action(u64),
    /// The staged actions an apply folded in, in staging order.
    Batch(Vec<u64>),
    Answer(Answer),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub action_id: u64,
    pub kind: ActionKind,
    pub target: Target,
    pub timestamp: DateTime<Utc>,
    /// Status when the entry was written; [`with_current_status`] gives the
    /// status after later entries.
    pub status: ActionStatus,
    /// Intent a text query was routed by, so replay needs no provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<IntentCategory>,
}

impl LogEntry {
    pub fn node(&self) -> Option<&NodeId> {
        match &self.target {
            Target::Node(n) => Some(n),
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match &self.target {
            Target::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_graph_action(&self) -> bool {
        matches!(self.kind, ActionKind::IncludeNode | ActionKind::ExcludeNode)
    }
}

/// Ids taken back by undo entries; undoing an apply takes back its batch.
pub fn undone_ids(log: &[LogEntry]) -> BTreeSet<u64> {
    let by_id: HashMap<u64, &LogEntry> = log.iter().map(|e| (e.action_id, e)).collect();
    let mut out = BTreeSet::new();
    for e in log.iter().filter(|e| e.kind == ActionKind::Undo) {
        let Target::Action(id) = e.target else { continue };
        out.insert(id);
        if let Some(Target::Batch(batch)) = by_id.get(&id).map(|t| &t.target) {
            out.extend(batch.iter().copied());
        }
    }
    out
}

/// Ids folded in by applies that were not themselves undone.
pub fn applied_ids(log: &[LogEntry], undone: &BTreeSet<u64>) -> BTreeSet<u64> {
    log.iter()
        .filter(|e| e.kind == ActionKind::Apply && !undone.contains(&e.action_id))
        .filter_map(|e| match &e.target {
            Target::Batch(b) => Some(b.iter().copied()),
            _ => None,
        })
        .flatten()
        .collect()
}

/// The record with each entry's status brought up to date.
pub fn with_current_status(log: &[LogEntry]) -> Vec<LogEntry> {
    let undone = undone_ids(log);
    let applied = applied_ids(log, &undone);
    log.iter()
        .map(|e| {
            let mut e = e.clone();
            e.status = if undone.contains(&e.action_id) {
                ActionStatus::Undone
            } else if e.is_graph_action() && !applied.contains(&e.action_id) {
                ActionStatus::Staged
            } else {
                ActionStatus::Applied
            };
            e
        })
        .collect()
}

/// Graph actions waiting for the next apply, in staging order.
pub fn staged(log: &[LogEntry]) -> Vec<&LogEntry> {
    let undone = undone_ids(log);
    let applied = applied_ids(log, &undone);
    log.iter()
        .filter(|e| e.is_graph_action() && !undone.contains(&e.action_id) && !applied.contains(&e.action_id))
        .collect()
}

pub fn write_entry(w: &mut dyn Write, entry: &LogEntry) -> std::io::Result<()> {
    let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
    writeln!(w, "{line}")?;
    w.flush()
}

/// Parses a newline-delimited log; blank lines are skipped.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogEntry>, SessionError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(SessionError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| SessionError::MalformedLog {
            line: i as u64 + 1,
            reason: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Starts at a fixed instant and advances one second per reading.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicI64,
}

impl StepClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        StepClock {
            next: AtomicI64::new(start.timestamp()),
        }
    }

    pub fn epoch() -> Self {
        StepClock::new(Utc.timestamp_opt(1_700_000_000, 0).unwrap())
    }
}

impl Clock for StepClock {
    fn now(&self) -> DateTime<Utc> {
        let s = self.next.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(s, 0).unwrap()
    }
}
