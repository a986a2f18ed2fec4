//! Request and response bodies of the `v1` protocol.
//!
//! | method | path                         | request           | response          |
//! |--------|------------------------------|-------------------|-------------------|
//! | GET    | `/v1/unresolved`             |                   | [`UnresolvedList`] |
//! | GET    | `/v1/candidates/{callsite}?k=` |                 | [`CandidateList`]  |
//! | POST   | `/v1/decisions`              | [`DecisionRequest`] | [`DecisionAck`]  |
//! | GET    | `/v1/export`                 |                   | [`ExportBody`]     |
//!
//! `GET /v1/export?format=ndjson` returns the augmented edge file itself.
//! Errors carry an [`ErrorBody`] with status 404 (unknown call site), 422
//! (invalid decision) or 500.

use callsight::truth::EdgeRecord;
use callsight::NodeId;
use serde::{Deserialize, Serialize};

use crate::log::{TriageDecision, Verdict};

/// A source excerpt: whole lines around a span. `offset` is the byte offset
/// of the excerpt within its file, so the span highlights at
/// `start - offset .. end - offset`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub text: String,
    pub offset: usize,
    /// 1-based line of the excerpt's first character.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnresolvedSite {
    pub callsite: NodeId,
    pub file: String,
    pub start: usize,
    pub end: usize,
    /// Callee text such as `lexer.showPosition`, when the call has one.
    pub callee_name: Option<String>,
    pub excerpt: Option<Excerpt>,
    /// Current verdict from the decision log, if any.
    pub decision: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnresolvedList {
    pub sites: Vec<UnresolvedSite>,
    pub total_call_sites: usize,
    /// Unresolved sites that already carry a decision.
    pub decided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    /// 0-based position in the ranking.
    pub rank: usize,
    pub callee: NodeId,
    pub score: f64,
    pub kind: String,
    pub name: Option<String>,
    pub file: String,
    pub start: usize,
    pub end: usize,
    pub excerpt: Option<Excerpt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub callsite: NodeId,
    pub k: usize,
    /// Total number of candidates (every function definition).
    pub n: usize,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub callsite: NodeId,
    #[serde(default)]
    pub callee: Option<NodeId>,
    pub verdict: Verdict,
    #[serde(default)]
    pub analyst: String,
    /// Milliseconds since the Unix epoch; the server clock when absent.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionAck {
    pub id: u64,
    pub decision: TriageDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportBody {
    /// Static edges plus accepted analyst edges, as edge-file records.
    pub edges: Vec<EdgeRecord>,
    /// The accepted analyst edges alone, for use as extra training labels.
    pub analyst_edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub error: String,
}
