//! Whole-project JavaScript program graphs and call-edge link prediction.
//!
//! The pipeline: [`graph::parse_project`] merges per-file syntax trees under
//! one root, [`prune::prune`] removes low-information intermediate nodes,
//! [`semantic::link_identifiers`] joins every use of a name through one
//! shared node, and [`features::compute_features`] extracts per-node inputs.
//! Labelled call edges come from [`truth`] (static exports, a conservative
//! resolver) and [`instrument`] (dynamic traces). [`model`] trains a gated
//! graph-convolution link predictor over the graph, and [`eval`] ranks every
//! function definition for a call site and summarises those ranks.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod instrument;
pub mod model;
pub mod prune;
pub mod semantic;
pub mod truth;

pub use callsight_js::NodeKind;
pub use error::{Error, Result};
pub use features::{compute_features, enumerate_endpoints, FeatureRow, FeatureTable};
pub use graph::{
    parse_project, Edge, EdgeType, FileFilter, GraphNode, NodeId, ProgramGraph, TOOL_VERSION,
};
pub use prune::{default_prune_kinds, prune};
pub use semantic::link_identifiers;
pub use truth::{CallEdge, CallEdgeSet, FileMeta, Provenance};

/// Parses, prunes and links a project in one step.
pub fn build_graph(
    project_dir: &std::path::Path,
    filter: &FileFilter,
    prune_kinds: &std::collections::BTreeSet<NodeKind>,
) -> Result<(ProgramGraph, Vec<graph::Diagnostic>)> {
    let (graph, diagnostics) = parse_project(project_dir, filter)?;
    let graph = link_identifiers(&prune(&graph, prune_kinds)?);
    Ok((graph, diagnostics))
}
