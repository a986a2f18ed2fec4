//! Project-wide semantic name nodes.

use std::collections::BTreeMap;

use crate::graph::{Edge, EdgeType, GraphNode, NodeId, ProgramGraph};

/// Adds one `SemanticName` node per distinct identifier text in the project
/// and joins every named syntax node to it (with reverse edges).
///
/// Existing semantic nodes are rebuilt, so linking twice is the same as
/// linking once. Semantic nodes take fresh ids after every syntax node, in
/// name order.
pub fn link_identifiers(graph: &ProgramGraph) -> ProgramGraph {
    let mut out = graph.clone();
    out.nodes.retain(|n| !n.semantic);
    out.edges
        .retain(|e| !matches!(e.etype, EdgeType::Semantic | EdgeType::SemanticRev));
    let mut by_name: BTreeMap<&str, Vec<NodeId>> = BTreeMap::new();
    for node in graph.nodes.iter().filter(|n| !n.semantic) {
        if let Some(name) = &node.name {
            by_name.entry(name.as_str()).or_default().push(node.id);
        }
    }
    let mut next = out.next_id();
    for (name, users) in by_name {
        let sem = next;
        next += 1;
        out.nodes
            .push(GraphNode::semantic_name(sem, name.to_string()));
        for user in users {
            out.edges.push(Edge::new(user, sem, EdgeType::Semantic));
            out.edges.push(Edge::new(sem, user, EdgeType::SemanticRev));
        }
    }
    out.canonicalize();
    out
}

/// Copy of `graph` without semantic nodes or edges.
pub fn strip_semantic(graph: &ProgramGraph) -> ProgramGraph {
    let mut out = graph.clone();
    out.nodes.retain(|n| !n.semantic);
    out.edges
        .retain(|e| !matches!(e.etype, EdgeType::Semantic | EdgeType::SemanticRev));
    out
}
