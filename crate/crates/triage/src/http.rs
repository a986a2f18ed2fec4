//! The `v1` routes over a shared [`Triage`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use callsight::eval::MAX_K;
use callsight::NodeId;
use serde::Deserialize;

use crate::error::{TriageError, TriageResult};
use crate::state::Triage;
use crate::wire::{CandidateList, DecisionAck, DecisionRequest, UnresolvedList};

#[derive(Debug, Deserialize)]
struct KQuery {
    k: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

pub fn router(triage: Arc<Triage>) -> Router {
    Router::new()
        .route("/v1/unresolved", get(unresolved))
        .route("/v1/candidates/{callsite}", get(candidates))
        .route("/v1/decisions", post(decide))
        .route("/v1/export", get(export))
        .with_state(triage)
}

async fn unresolved(State(t): State<Arc<Triage>>) -> Json<UnresolvedList> {
    Json(t.unresolved())
}

async fn candidates(
    State(t): State<Arc<Triage>>,
    Path(callsite): Path<NodeId>,
    Query(q): Query<KQuery>,
) -> TriageResult<Json<CandidateList>> {
    t.candidates(callsite, q.k.unwrap_or(MAX_K)).map(Json)
}

async fn decide(
    State(t): State<Arc<Triage>>,
    Json(req): Json<DecisionRequest>,
) -> TriageResult<Json<DecisionAck>> {
    // Appends fsync; keep them off the async workers.
    tokio::task::spawn_blocking(move || t.record(req))
        .await
        .map_err(|e| TriageError::Validation(format!("decision task failed: {e}")))?
        .map(Json)
}

async fn export(
    State(t): State<Arc<Triage>>,
    Query(q): Query<ExportQuery>,
) -> TriageResult<Response> {
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(t.export()?).into_response()),
        Some("ndjson") => Ok((
            [(header::CONTENT_TYPE, "application/x-ndjson")],
            t.export_text()?,
        )
            .into_response()),
        Some(other) => Err(TriageError::Validation(format!(
            "unknown export format `{other}`"
        ))),
    }
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, triage: Arc<Triage>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(triage)).await
}
