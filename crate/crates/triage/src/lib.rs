//! Analyst triage of statically unresolved call sites.
//!
//! The service lists call sites the static edge set leaves unresolved,
//! ranks candidate callees for each with a trained model, records
//! accept/reject/skip decisions in an append-only log, and exports the
//! static edges augmented with accepted analyst edges. The graph, model and
//! static edge files are only ever read. See [`wire`] for the protocol.

pub mod error;
pub mod http;
pub mod log;
pub mod state;
pub mod wire;

pub use error::{TriageError, TriageResult};
pub use http::{router, serve};
pub use log::{fold, parse_log, DecisionLog, TriageDecision, Verdict};
pub use state::{export_augmented, list_unresolved, Triage};
