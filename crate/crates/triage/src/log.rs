//! Append-only decision log.
//!
//! Each line is one [`TriageDecision`] as JSON. The current verdict for a
//! call site is a pure fold over the log: entries are ordered by timestamp
//! (ties by log position) and the last one per call site wins.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use callsight::NodeId;
use serde::{Deserialize, Serialize};

use crate::error::{TriageError, TriageResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    Skipped,
}

/// One analyst decision as stored in the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageDecision {
    /// Position in the log, assigned on append.
    pub id: u64,
    pub callsite: NodeId,
    /// The chosen callee; `None` rejects every candidate.
    pub callee: Option<NodeId>,
    pub verdict: Verdict,
    pub analyst: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Parses log text. A malformed final line is treated as a torn append and
/// ignored (its line number is returned); a malformed line anywhere else is
/// an error.
pub fn parse_log(text: &str) -> TriageResult<(Vec<TriageDecision>, Option<usize>)> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut out = Vec::with_capacity(lines.len());
    let mut torn = None;
    for (pos, &(i, line)) in lines.iter().enumerate() {
        match serde_json::from_str::<TriageDecision>(line) {
            Ok(d) => out.push(d),
            Err(_) if pos + 1 == lines.len() && !text.ends_with('\n') => torn = Some(i + 1),
            Err(e) => {
                return Err(TriageError::Log {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((out, torn))
}

/// The surviving decision per call site.
pub fn fold(decisions: &[TriageDecision]) -> BTreeMap<NodeId, TriageDecision> {
    let mut order: Vec<(usize, &TriageDecision)> = decisions.iter().enumerate().collect();
    order.sort_by_key(|&(pos, d)| (d.timestamp, pos));
    let mut state = BTreeMap::new();
    for (_, d) in order {
        state.insert(d.callsite, d.clone());
    }
    state
}

/// Accepted `(callsite, callee)` pairs after folding.
pub fn accepted_edges(decisions: &[TriageDecision]) -> Vec<(NodeId, NodeId)> {
    fold(decisions)
        .into_values()
        .filter(|d| d.verdict == Verdict::Accepted)
        .filter_map(|d| d.callee.map(|c| (d.callsite, c)))
        .collect()
}

/// The log file plus its decoded entries.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
    entries: Vec<TriageDecision>,
}

impl DecisionLog {
    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: &Path) -> TriageResult<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(TriageError::io(path, e)),
        };
        let (entries, torn) = parse_log(&text)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| TriageError::io(path, e))?;
        if torn.is_some() {
            // Drop the torn line so the next append starts cleanly.
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64)
                .map_err(|e| TriageError::io(path, e))?;
        }
        Ok(DecisionLog {
            path: path.to_path_buf(),
            file,
            entries,
        })
    }

    pub fn entries(&self) -> &[TriageDecision] {
        &self.entries
    }

    pub fn next_id(&self) -> u64 {
        self.entries.last().map_or(0, |d| d.id + 1)
    }

    /// Durably appends `decision`; its id must be [`Self::next_id`].
    pub fn append(&mut self, decision: TriageDecision) -> TriageResult<()> {
        debug_assert_eq!(decision.id, self.next_id());
        let mut line = serde_json::to_string(&decision).expect("decisions serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| TriageError::io(&self.path, e))?;
        self.entries.push(decision);
        Ok(())
    }
}
