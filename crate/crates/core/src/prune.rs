//! Removal of low-information intermediate syntax nodes.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use callsight_js::NodeKind;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeType, NodeId, ProgramGraph};

pub const DEFAULT_PRUNE_KINDS: &[NodeKind] = &[
    NodeKind::ExpressionStatement,
    NodeKind::BinaryExpression,
    NodeKind::LogicalExpression,
    NodeKind::UnaryExpression,
    NodeKind::SequenceExpression,
    NodeKind::ParenthesizedExpression,
    NodeKind::Literal,
    NodeKind::TemplateElement,
];

/// Kinds that carry features or link endpoints and may never be pruned.
pub const PROTECTED_KINDS: &[NodeKind] = &[
    NodeKind::Project,
    NodeKind::Program,
    NodeKind::FunctionDeclaration,
    NodeKind::FunctionExpression,
    NodeKind::ArrowFunctionExpression,
    NodeKind::CallExpression,
    NodeKind::NewExpression,
    NodeKind::Identifier,
    NodeKind::MemberExpression,
    NodeKind::ObjectExpression,
    NodeKind::Property,
    NodeKind::VariableDeclarator,
    NodeKind::AssignmentExpression,
    NodeKind::ReturnStatement,
    NodeKind::ClassDeclaration,
    NodeKind::MethodDefinition,
];

pub fn is_protected(kind: NodeKind) -> bool {
    PROTECTED_KINDS.contains(&kind) || kind == NodeKind::SemanticName
}

/// Working state of a prune pass: each node's ordered child list, kept in
/// step with the tree as nodes are spliced out.
#[derive(Debug, Clone)]
pub struct PruneState {
    pub parent_child_map: BTreeMap<NodeId, Vec<NodeId>>,
    pub prune_kinds: BTreeSet<NodeKind>,
    parent: BTreeMap<NodeId, NodeId>,
}

impl PruneState {
    pub fn new(graph: &ProgramGraph, prune_kinds: BTreeSet<NodeKind>) -> Self {
        let mut parent_child_map: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut parent = BTreeMap::new();
        for e in graph.edges_of(EdgeType::Ast) {
            parent_child_map.entry(e.src).or_default().push(e.dst);
            parent.insert(e.dst, e.src);
        }
        for children in parent_child_map.values_mut() {
            children.sort_unstable();
        }
        PruneState {
            parent_child_map,
            prune_kinds,
            parent,
        }
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(&id).copied()
    }

    /// Replaces `id` in its parent's child list by its own children, in place.
    pub fn splice_out(&mut self, id: NodeId) {
        let children = self.parent_child_map.remove(&id).unwrap_or_default();
        let Some(parent) = self.parent.remove(&id) else {
            return;
        };
        for &c in &children {
            self.parent.insert(c, parent);
        }
        let siblings = self.parent_child_map.entry(parent).or_default();
        let at = siblings
            .iter()
            .position(|&s| s == id)
            .expect("child listed under its parent");
        siblings.splice(at..=at, children);
        if siblings.is_empty() {
            self.parent_child_map.remove(&parent);
        }
    }

    pub fn ast_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.parent_child_map
            .iter()
            .flat_map(|(&p, cs)| cs.iter().map(move |&c| (p, c)))
    }
}

/// Removes every node whose kind is in `prune_kinds`, attaching each survivor
/// to its nearest surviving ancestor with sibling order preserved.
///
/// A node lifted out of a parenthesized expression takes over the field of
/// the parentheses, so `x = (function () {})` still reads as an assignment
/// whose right-hand side is the function.
pub fn prune(graph: &ProgramGraph, prune_kinds: &BTreeSet<NodeKind>) -> Result<ProgramGraph> {
    if let Some(&kind) = prune_kinds.iter().find(|k| is_protected(**k)) {
        return Err(Error::ProtectedKind(kind));
    }
    let mut state = PruneState::new(graph, prune_kinds.clone());
    let mut out = graph.clone();
    let doomed: Vec<NodeId> = graph
        .nodes
        .iter()
        .filter(|n| !n.semantic && prune_kinds.contains(&n.kind))
        .map(|n| n.id)
        .collect();
    for &id in &doomed {
        let node = graph.node(id).expect("listed node exists");
        if node.kind == NodeKind::ParenthesizedExpression {
            let field = out.nodes[out.index_of(id).unwrap()].field.clone();
            for c in state.parent_child_map.get(&id).cloned().unwrap_or_default() {
                let i = out.index_of(c).unwrap();
                out.nodes[i].field = field.clone();
            }
        }
        state.splice_out(id);
    }
    let removed: HashSet<NodeId> = doomed.into_iter().collect();
    out.nodes.retain(|n| !removed.contains(&n.id));
    out.edges.retain(|e| {
        !matches!(e.etype, EdgeType::Ast | EdgeType::AstRev)
            && !removed.contains(&e.src)
            && !removed.contains(&e.dst)
    });
    for (p, c) in state.ast_edges() {
        out.edges.push(Edge::new(p, c, EdgeType::Ast));
        out.edges.push(Edge::new(c, p, EdgeType::AstRev));
    }
    let mut kinds: BTreeSet<&str> = graph.meta.prune_kinds.iter().map(String::as_str).collect();
    kinds.extend(prune_kinds.iter().map(|k| k.as_str()));
    out.meta.prune_kinds = kinds.into_iter().map(str::to_string).collect();
    out.canonicalize();
    Ok(out)
}

pub fn default_prune_kinds() -> BTreeSet<NodeKind> {
    DEFAULT_PRUNE_KINDS.iter().copied().collect()
}
