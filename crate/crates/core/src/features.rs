//! Per-node raw features and link endpoints.

use callsight_js::NodeKind;

use crate::graph::{GraphNode, NodeId, ProgramGraph};

/// The four raw features of one node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureRow {
    pub node_type: NodeKind,
    pub name: Option<String>,
    pub number_of_parameter: u32,
    pub number_of_argument: u32,
}

/// Feature rows aligned with `graph.nodes` (row `i` describes `nodes[i]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub const COLUMNS: [&'static str; 4] = [
        "node_type",
        "name",
        "number_of_parameter",
        "number_of_argument",
    ];

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same table with every feature replaced by a constant; used to ablate
    /// node features while keeping the graph structure.
    pub fn nulled(&self) -> FeatureTable {
        FeatureTable {
            rows: self
                .rows
                .iter()
                .map(|_| FeatureRow {
                    node_type: NodeKind::Program,
                    name: None,
                    number_of_parameter: 0,
                    number_of_argument: 0,
                })
                .collect(),
        }
    }
}

/// Parent lookup over a graph's AST edges, by dense index.
pub struct Tree<'g> {
    pub graph: &'g ProgramGraph,
    pub parents: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl<'g> Tree<'g> {
    pub fn new(graph: &'g ProgramGraph) -> Self {
        Tree {
            graph,
            parents: graph.ast_parents(),
            children: graph.ast_children(),
        }
    }

    pub fn node(&self, i: usize) -> &'g GraphNode {
        &self.graph.nodes[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parents[i]
    }

    pub fn child(&self, i: usize, field: &str) -> Option<usize> {
        self.children[i]
            .iter()
            .copied()
            .find(|&c| self.graph.nodes[c].field == field)
    }

    /// Text naming the callee of a call node: the callee identifier, or the
    /// property of a non-computed member callee.
    pub fn callee_name(&self, call: usize) -> Option<&'g str> {
        let callee = self.child(call, "callee")?;
        self.reference_name(callee)
    }

    /// Name written by an identifier or `a.b` member reference.
    pub fn reference_name(&self, i: usize) -> Option<&'g str> {
        let node = self.node(i);
        match node.kind {
            NodeKind::Identifier | NodeKind::PrivateIdentifier => node.name.as_deref(),
            NodeKind::MemberExpression => self
                .child(i, "property")
                .and_then(|p| self.node(p).name.as_deref()),
            _ => None,
        }
    }

    /// A function's own name, or the name it is bound to where it appears:
    /// variable initializer, property or method value, class field,
    /// assignment right-hand side, or parameter default.
    pub fn function_name(&self, f: usize) -> Option<&'g str> {
        if let Some(id) = self.child(f, "id") {
            return self.node(id).name.as_deref();
        }
        let parent = self.parent(f)?;
        let field = self.node(f).field.as_str();
        let target = match (self.node(parent).kind, field) {
            (NodeKind::VariableDeclarator, "init") => self.child(parent, "id"),
            (
                NodeKind::Property | NodeKind::MethodDefinition | NodeKind::PropertyDefinition,
                "value",
            ) => self.child(parent, "key"),
            (NodeKind::AssignmentExpression, "right") | (NodeKind::AssignmentPattern, "right") => {
                self.child(parent, "left")
            }
            _ => None,
        }?;
        self.reference_name(target)
    }

    pub fn feature_name(&self, i: usize) -> Option<&'g str> {
        let node = self.node(i);
        if node.kind.is_call_site() {
            self.callee_name(i)
        } else if node.kind.is_function() {
            self.function_name(i)
        } else {
            node.name.as_deref()
        }
    }
}

pub fn compute_features(graph: &ProgramGraph) -> FeatureTable {
    let tree = Tree::new(graph);
    let rows = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| FeatureRow {
            node_type: node.kind,
            name: tree.feature_name(i).map(str::to_string),
            number_of_parameter: if node.kind.is_function() {
                node.params.unwrap_or(0)
            } else {
                0
            },
            number_of_argument: if node.kind.is_call_site() {
                node.args.unwrap_or(0)
            } else {
                0
            },
        })
        .collect();
    FeatureTable { rows }
}

/// All call sites and all function definitions, each in ascending id order.
pub fn enumerate_endpoints(graph: &ProgramGraph) -> (Vec<NodeId>, Vec<NodeId>) {
    let pick = |pred: fn(NodeKind) -> bool| {
        graph
            .nodes
            .iter()
            .filter(|n| !n.semantic && pred(n.kind))
            .map(|n| n.id)
            .collect::<Vec<_>>()
    };
    (pick(NodeKind::is_call_site), pick(NodeKind::is_function))
}
