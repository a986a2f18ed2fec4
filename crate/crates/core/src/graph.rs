//! Whole-project program graphs: per-file syntax trees merged under one
//! synthetic root, with typed edges.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use callsight_js::NodeKind;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_to_string, write_file, Error, Result};

pub type NodeId = usize;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Ast,
    AstRev,
    Semantic,
    SemanticRev,
    CallMsg,
}

impl EdgeType {
    pub const ALL: [EdgeType; 5] = [
        EdgeType::Ast,
        EdgeType::AstRev,
        EdgeType::Semantic,
        EdgeType::SemanticRev,
        EdgeType::CallMsg,
    ];

    /// Row of this type in the edge-type embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::Ast => "ast",
            EdgeType::AstRev => "ast_rev",
            EdgeType::Semantic => "semantic",
            EdgeType::SemanticRev => "semantic_rev",
            EdgeType::CallMsg => "call_msg",
        }
    }

    /// The twin type carried by the swapped edge, for paired types.
    pub fn reverse(self) -> Option<EdgeType> {
        match self {
            EdgeType::Ast => Some(EdgeType::AstRev),
            EdgeType::AstRev => Some(EdgeType::Ast),
            EdgeType::Semantic => Some(EdgeType::SemanticRev),
            EdgeType::SemanticRev => Some(EdgeType::Semantic),
            EdgeType::CallMsg => None,
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(rename = "type")]
    pub etype: EdgeType,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId, etype: EdgeType) -> Self {
        Edge { src, dst, etype }
    }

    fn sort_key(&self) -> (EdgeType, NodeId, NodeId) {
        (self.etype, self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Identifier text for identifier nodes; the linked text for semantic nodes.
    pub name: Option<String>,
    /// Index into [`ProgramGraph::files`]; `None` for synthetic nodes.
    pub file: Option<u32>,
    pub start: usize,
    pub end: usize,
    pub semantic: bool,
    /// Syntactic role under the parent (`init`, `callee`, `key`, ...).
    pub field: String,
    pub params: Option<u32>,
    pub args: Option<u32>,
}

impl GraphNode {
    fn synthetic(id: NodeId, kind: NodeKind, name: Option<String>) -> Self {
        GraphNode {
            id,
            kind,
            name,
            file: None,
            start: 0,
            end: 0,
            semantic: kind == NodeKind::SemanticName,
            field: String::new(),
            params: None,
            args: None,
        }
    }

    pub fn semantic_name(id: NodeId, name: String) -> Self {
        GraphNode::synthetic(id, NodeKind::SemanticName, Some(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub tool_version: String,
    pub prune_kinds: Vec<String>,
    pub seed: u64,
    /// SHA-256 of every matched source file, keyed by relative path.
    pub input_digests: BTreeMap<String, String>,
    pub project_dir: Option<String>,
}

impl Default for GraphMeta {
    fn default() -> Self {
        GraphMeta {
            tool_version: TOOL_VERSION.to_string(),
            prune_kinds: Vec::new(),
            seed: 0,
            input_digests: BTreeMap::new(),
            project_dir: None,
        }
    }
}

/// A project's nodes (sorted by id) and typed edges (sorted by type, source,
/// destination). Ids are assigned once, before pruning, and never change, so
/// they may be sparse after pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
    pub root: NodeId,
    pub files: Vec<String>,
    pub meta: GraphMeta,
}

/// A file that could not be parsed and was left out of the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: Option<u32>,
    pub col: Option<u32>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.col) {
            (Some(line), Some(col)) => {
                write!(f, "{}:{}:{}: {}", self.file, line, col, self.message)
            }
            _ => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

impl ProgramGraph {
    /// A graph holding only the synthetic project root.
    pub fn empty() -> Self {
        ProgramGraph {
            nodes: vec![GraphNode::synthetic(0, NodeKind::Project, None)],
            edges: Vec::new(),
            root: 0,
            files: Vec::new(),
            meta: GraphMeta::default(),
        }
    }

    /// Dense position of `id` in `nodes`.
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn node(&self, id: NodeId) -> Option<&GraphNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn file_name(&self, node: &GraphNode) -> Option<&str> {
        node.file.map(|f| self.files[f as usize].as_str())
    }

    pub fn file_index(&self, path: &str) -> Option<u32> {
        self.files.iter().position(|f| f == path).map(|i| i as u32)
    }

    pub fn next_id(&self) -> NodeId {
        self.nodes.last().map_or(0, |n| n.id + 1)
    }

    pub fn edges_of(&self, etype: EdgeType) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.etype == etype)
    }

    /// AST parent of every node, by dense index.
    pub fn ast_parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.nodes.len()];
        for e in self.edges_of(EdgeType::Ast) {
            if let (Some(p), Some(c)) = (self.index_of(e.src), self.index_of(e.dst)) {
                parents[c] = Some(p);
            }
        }
        parents
    }

    /// AST children of every node in sibling order, by dense index.
    pub fn ast_children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.nodes.len()];
        for e in self.edges_of(EdgeType::Ast) {
            if let (Some(p), Some(c)) = (self.index_of(e.src), self.index_of(e.dst)) {
                children[p].push(c);
            }
        }
        for list in &mut children {
            list.sort_unstable();
        }
        children
    }

    /// Restores the canonical node and edge order and drops duplicate edges.
    pub fn canonicalize(&mut self) {
        self.nodes.sort_by_key(|n| n.id);
        self.edges.sort_by_key(Edge::sort_key);
        self.edges.dedup();
    }

    /// Checks every structural invariant; used when loading graphs from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("malformed graph: {msg}")));
        if self.nodes.windows(2).any(|w| w[0].id >= w[1].id) {
            return bad("node ids must be unique and ascending".into());
        }
        let Some(root) = self.index_of(self.root) else {
            return bad(format!("root {} missing", self.root));
        };
        if self.nodes[root].kind != NodeKind::Project {
            return bad("root must be a Project node".into());
        }
        for node in &self.nodes {
            if node.file.is_some_and(|f| f as usize >= self.files.len()) {
                return bad(format!("node {} refers to a missing file", node.id));
            }
            if node.semantic != (node.kind == NodeKind::SemanticName) {
                return bad(format!(
                    "node {} has an inconsistent semantic flag",
                    node.id
                ));
            }
            if node.start > node.end {
                return bad(format!("node {} has an inverted span", node.id));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            let (Some(s), Some(d)) = (self.node(e.src), self.node(e.dst)) else {
                return bad(format!("edge {}->{} has a missing endpoint", e.src, e.dst));
            };
            if !seen.insert(*e) {
                return bad(format!("duplicate edge {}->{}", e.src, e.dst));
            }
            if e.etype == EdgeType::CallMsg && !(s.kind.is_call_site() && d.kind.is_function()) {
                return bad(format!(
                    "call_msg edge {}->{} must join a call site to a function",
                    e.src, e.dst
                ));
            }
        }
        for e in &self.edges {
            if let Some(rev) = e.etype.reverse() {
                if !seen.contains(&Edge::new(e.dst, e.src, rev)) {
                    return bad(format!(
                        "{} edge {}->{} has no reverse twin",
                        e.etype, e.src, e.dst
                    ));
                }
            }
        }
        let mut parent_count = vec![0usize; self.nodes.len()];
        for e in self.edges_of(EdgeType::Ast) {
            let c = self.index_of(e.dst).unwrap();
            parent_count[c] += 1;
            if self.nodes[c].semantic || self.nodes[self.index_of(e.src).unwrap()].semantic {
                return bad("ast edges must join syntax nodes".into());
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let expected = usize::from(!node.semantic && i != root);
            if parent_count[i] != expected {
                return bad(format!(
                    "node {} has {} ast parents",
                    node.id, parent_count[i]
                ));
            }
        }
        // Every syntax node must reach the root; parents precede children.
        for e in self.edges_of(EdgeType::Ast) {
            if e.src >= e.dst {
                return bad(format!(
                    "ast edge {}->{} does not point forward",
                    e.src, e.dst
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File selection

/// Path glob: `*` and `?` stay within one path segment, `**` spans segments.
#[derive(Debug, Clone)]
pub struct Glob {
    pattern: String,
    regex: Regex,
}

impl Glob {
    pub fn new(pattern: &str) -> Result<Self> {
        let mut re = String::from("^");
        let chars: Vec<char> = pattern.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            match chars[i] {
                '*' if chars.get(i + 1) == Some(&'*') => {
                    if chars.get(i + 2) == Some(&'/') {
                        re.push_str("(?:.*/)?");
                        i += 3;
                    } else {
                        re.push_str(".*");
                        i += 2;
                    }
                    continue;
                }
                '*' => re.push_str("[^/]*"),
                '?' => re.push_str("[^/]"),
                c => re.push_str(&regex::escape(&c.to_string())),
            }
            i += 1;
        }
        re.push('$');
        let regex = Regex::new(&re).map_err(|_| Error::BadGlob(pattern.to_string()))?;
        Ok(Glob {
            pattern: pattern.to_string(),
            regex,
        })
    }

    pub fn matches(&self, path: &str) -> bool {
        self.regex.is_match(path)
    }

    pub fn as_str(&self) -> &str {
        &self.pattern
    }
}

pub const DEFAULT_INCLUDE: &[&str] = &["**/*.js", "**/*.mjs", "**/*.cjs"];
pub const DEFAULT_EXCLUDE: &[&str] = &["**/node_modules/**"];

/// Which files of a project directory are parsed.
#[derive(Debug, Clone)]
pub struct FileFilter {
    pub include: Vec<Glob>,
    pub exclude: Vec<Glob>,
}

impl FileFilter {
    pub fn new<S: AsRef<str>>(include: &[S], exclude: &[S]) -> Result<Self> {
        Ok(FileFilter {
            include: include
                .iter()
                .map(|g| Glob::new(g.as_ref()))
                .collect::<Result<_>>()?,
            exclude: exclude
                .iter()
                .map(|g| Glob::new(g.as_ref()))
                .collect::<Result<_>>()?,
        })
    }

    pub fn accepts(&self, rel: &str) -> bool {
        self.include.iter().any(|g| g.matches(rel)) && !self.exclude.iter().any(|g| g.matches(rel))
    }

    /// Matching files as sorted `/`-separated paths relative to `dir`.
    pub fn list(&self, dir: &Path) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in walkdir::WalkDir::new(dir).follow_links(false) {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(dir).to_path_buf();
                Error::io(path, e.into())
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = relative_path(dir, entry.path());
            if self.accepts(&rel) {
                out.push(rel);
            }
        }
        out.sort();
        Ok(out)
    }
}

impl Default for FileFilter {
    fn default() -> Self {
        FileFilter::new(DEFAULT_INCLUDE, DEFAULT_EXCLUDE).expect("default globs are valid")
    }
}

pub(crate) fn relative_path(base: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------------------
// Construction

/// Parses every matching file and merges the trees under one `Project` root.
///
/// Files are numbered in lexicographic path order and nodes in preorder, so
/// ids are deterministic. A file that fails to parse is skipped and reported
/// in the returned diagnostics.
pub fn parse_project(
    project_dir: &Path,
    filter: &FileFilter,
) -> Result<(ProgramGraph, Vec<Diagnostic>)> {
    if !project_dir.is_dir() {
        return Err(Error::io(
            project_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "project directory not found"),
        ));
    }
    let paths = filter.list(project_dir)?;
    if paths.is_empty() {
        return Err(Error::NoFiles(project_dir.to_path_buf()));
    }
    let sources = paths
        .iter()
        .map(|rel| read_to_string(&project_dir.join(rel)).map(|src| (rel.clone(), src)))
        .collect::<Result<Vec<_>>>()?;
    let (mut graph, diagnostics) = graph_from_sources(&sources);
    graph.meta.project_dir = Some(project_dir.to_string_lossy().into_owned());
    Ok((graph, diagnostics))
}

/// Builds a graph from in-memory `(relative path, source)` pairs, taken in
/// the given order.
pub fn graph_from_sources(sources: &[(String, String)]) -> (ProgramGraph, Vec<Diagnostic>) {
    let parsed: Vec<_> = sources
        .par_iter()
        .map(|(_, src)| callsight_js::parse(src))
        .collect();
    let mut graph = ProgramGraph::empty();
    let mut diagnostics = Vec::new();
    for ((rel, src), result) in sources.iter().zip(parsed) {
        graph
            .meta
            .input_digests
            .insert(rel.clone(), sha256_hex(src.as_bytes()));
        let ast = match result {
            Ok(ast) => ast,
            Err(err) => {
                let (line, col) = callsight_js::line_col(src, err.offset);
                diagnostics.push(Diagnostic {
                    file: rel.clone(),
                    line: Some(line),
                    col: Some(col),
                    message: err.message,
                });
                continue;
            }
        };
        let file = graph.files.len() as u32;
        graph.files.push(rel.clone());
        let base = graph.next_id();
        for (local, node) in ast.nodes.iter().enumerate() {
            let id = base + local;
            let parent = node.parent.map_or(graph.root, |p| base + p);
            graph.nodes.push(GraphNode {
                id,
                kind: node.kind,
                name: node.name.clone(),
                file: Some(file),
                start: node.start,
                end: node.end,
                semantic: false,
                field: if node.parent.is_none() {
                    "program".to_string()
                } else {
                    node.field.to_string()
                },
                params: node.params,
                args: node.args,
            });
            graph.edges.push(Edge::new(parent, id, EdgeType::Ast));
            graph.edges.push(Edge::new(id, parent, EdgeType::AstRev));
        }
    }
    graph.canonicalize();
    (graph, diagnostics)
}

// ---------------------------------------------------------------------------
// Graph file

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    kind: String,
    name: Option<String>,
    file: Option<String>,
    start: usize,
    end: usize,
    semantic: bool,
    field: String,
    params: Option<u32>,
    args: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
    root: NodeId,
    files: Vec<String>,
    meta: GraphMeta,
}

impl ProgramGraph {
    /// The canonical serialization: compact JSON with fixed key order.
    pub fn to_json(&self) -> String {
        let record = GraphRecord {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    kind: n.kind.as_str().to_string(),
                    name: n.name.clone(),
                    file: self.file_name(n).map(str::to_string),
                    start: n.start,
                    end: n.end,
                    semantic: n.semantic,
                    field: n.field.clone(),
                    params: n.params,
                    args: n.args,
                })
                .collect(),
            edges: self.edges.clone(),
            root: self.root,
            files: self.files.clone(),
            meta: self.meta.clone(),
        };
        let mut out = serde_json::to_string(&record).expect("graph serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: GraphRecord =
            serde_json::from_str(text).map_err(|e| Error::json("graph file", e))?;
        let files = record.files;
        let nodes = record
            .nodes
            .into_iter()
            .map(|n| {
                let kind =
                    NodeKind::from_str(&n.kind).map_err(|e| Error::Invalid(e.to_string()))?;
                let file = match n.file {
                    None => None,
                    Some(f) => Some(files.iter().position(|x| *x == f).ok_or_else(|| {
                        Error::Invalid(format!("node {} names unknown file {f}", n.id))
                    })? as u32),
                };
                Ok(GraphNode {
                    id: n.id,
                    kind,
                    name: n.name,
                    file,
                    start: n.start,
                    end: n.end,
                    semantic: n.semantic,
                    field: n.field,
                    params: n.params,
                    args: n.args,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let graph = ProgramGraph {
            nodes,
            edges: record.edges,
            root: record.root,
            files,
            meta: record.meta,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ProgramGraph::from_json(&read_to_string(path)?)
    }

    /// Directory the graph was built from, if recorded.
    pub fn project_dir(&self) -> Option<PathBuf> {
        self.meta.project_dir.as_ref().map(PathBuf::from)
    }
}
