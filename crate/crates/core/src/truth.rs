//! Labelled call edges: representation, the position-based edge file, static
//! export ingestion, a conservative built-in resolver, merging and negative
//! sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use callsight_js::NodeKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file, Error, Result};
use crate::features::{enumerate_endpoints, Tree};
use crate::graph::{NodeId, ProgramGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Static,
    Dynamic,
    Analyst,
}

impl Provenance {
    pub const ALL: [Provenance; 3] = [Provenance::Static, Provenance::Dynamic, Provenance::Analyst];

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

/// Set of edge sources; merging edges unions their provenances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Provenances(u8);

impl Provenances {
    pub fn only(p: Provenance) -> Self {
        Provenances(p.bit())
    }

    pub fn contains(self, p: Provenance) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn union(self, other: Provenances) -> Self {
        Provenances(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Provenance> {
        Provenance::ALL
            .into_iter()
            .filter(move |p| self.contains(*p))
    }
}

impl Serialize for Provenances {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for Provenances {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let list = Vec::<Provenance>::deserialize(d)?;
        Ok(list.into_iter().fold(Provenances::default(), |acc, p| {
            acc.union(Provenances::only(p))
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallEdge {
    pub callsite: NodeId,
    pub callee: NodeId,
    pub provenance: Provenances,
    /// Number of dynamic observations; zero unless the edge was traced.
    pub count: u64,
}

/// Call edges keyed by `(callsite, callee)`, iterated in key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallEdgeSet {
    edges: BTreeMap<(NodeId, NodeId), (Provenances, u64)>,
}

impl CallEdgeSet {
    pub fn new() -> Self {
        CallEdgeSet::default()
    }

    /// Adds an edge, merging with an existing one for the same pair.
    pub fn insert(&mut self, edge: CallEdge) {
        let slot = self
            .edges
            .entry((edge.callsite, edge.callee))
            .or_insert((Provenances::default(), 0));
        slot.0 = slot.0.union(edge.provenance);
        slot.1 += edge.count;
    }

    pub fn add(&mut self, callsite: NodeId, callee: NodeId, provenance: Provenance) {
        let count = u64::from(provenance == Provenance::Dynamic);
        self.insert(CallEdge {
            callsite,
            callee,
            provenance: Provenances::only(provenance),
            count,
        });
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, callsite: NodeId, callee: NodeId) -> bool {
        self.edges.contains_key(&(callsite, callee))
    }

    pub fn get(&self, callsite: NodeId, callee: NodeId) -> Option<CallEdge> {
        self.edges
            .get(&(callsite, callee))
            .map(|&(provenance, count)| CallEdge {
                callsite,
                callee,
                provenance,
                count,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = CallEdge> + '_ {
        self.edges
            .iter()
            .map(|(&(callsite, callee), &(provenance, count))| CallEdge {
                callsite,
                callee,
                provenance,
                count,
            })
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.keys().copied()
    }

    /// Distinct call sites with at least one edge.
    pub fn callsites(&self) -> Vec<NodeId> {
        let mut out: Vec<_> = self.edges.keys().map(|k| k.0).collect();
        out.dedup();
        out
    }

    pub fn remove(&mut self, callsite: NodeId, callee: NodeId) -> Option<CallEdge> {
        self.edges
            .remove(&(callsite, callee))
            .map(|(provenance, count)| CallEdge {
                callsite,
                callee,
                provenance,
                count,
            })
    }

    /// Checks the endpoint invariants against `graph`.
    pub fn check_endpoints(&self, graph: &ProgramGraph) -> Result<()> {
        for (cs, f) in self.pairs() {
            check_endpoint(graph, cs, true)?;
            check_endpoint(graph, f, false)?;
        }
        Ok(())
    }
}

impl FromIterator<CallEdge> for CallEdgeSet {
    fn from_iter<I: IntoIterator<Item = CallEdge>>(iter: I) -> Self {
        let mut set = CallEdgeSet::new();
        for e in iter {
            set.insert(e);
        }
        set
    }
}

pub(crate) fn check_endpoint(graph: &ProgramGraph, id: NodeId, callsite: bool) -> Result<()> {
    let node = graph.node(id).ok_or(Error::UnknownNode(id))?;
    let ok = if callsite {
        node.kind.is_call_site()
    } else {
        node.kind.is_function()
    };
    if ok {
        Ok(())
    } else {
        Err(Error::WrongEndpoint {
            id,
            expected: if callsite {
                "call site"
            } else {
                "function definition"
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Position-based edge file

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanRef {
    pub file: String,
    pub start: usize,
    pub end: usize,
}

impl SpanRef {
    pub fn of(graph: &ProgramGraph, id: NodeId) -> Option<SpanRef> {
        let node = graph.node(id)?;
        Some(SpanRef {
            file: graph.file_name(node)?.to_string(),
            start: node.start,
            end: node.end,
        })
    }

    /// The `file:start:end` key used by site maps.
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.file, self.start, self.end)
    }
}

impl fmt::Display for SpanRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// One line of an edge file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub caller: SpanRef,
    pub callee: SpanRef,
    pub provenance: Provenance,
    pub count: u64,
}

/// Edge-file lines for `edges`: one record per provenance of each edge. A
/// dynamic record carries the observation count; other records count 1.
pub fn edge_records(graph: &ProgramGraph, edges: &CallEdgeSet) -> Result<Vec<EdgeRecord>> {
    let mut out = Vec::new();
    for e in edges.iter() {
        let caller = SpanRef::of(graph, e.callsite).ok_or(Error::UnknownNode(e.callsite))?;
        let callee = SpanRef::of(graph, e.callee).ok_or(Error::UnknownNode(e.callee))?;
        for p in e.provenance.iter() {
            out.push(EdgeRecord {
                caller: caller.clone(),
                callee: callee.clone(),
                provenance: p,
                count: if p == Provenance::Dynamic {
                    e.count.max(1)
                } else {
                    1
                },
            });
        }
    }
    Ok(out)
}

/// Provenance of a generated file: the producing tool, the seed, and the
/// SHA-256 of each input keyed by its role. Line-oriented files may open
/// with it as a `{"meta": ...}` header line, which readers skip.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileMeta {
    pub tool_version: String,
    pub seed: u64,
    pub input_digests: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    meta: FileMeta,
}

impl FileMeta {
    /// The header line, newline included.
    pub fn header_line(&self) -> String {
        let mut s =
            serde_json::to_string(&MetaLine { meta: self.clone() }).expect("meta serializes");
        s.push('\n');
        s
    }

    /// Parses a header line.
    pub fn from_header(line: &str) -> Option<FileMeta> {
        serde_json::from_str::<MetaLine>(line).ok().map(|m| m.meta)
    }
}

pub fn write_edge_file(path: &Path, graph: &ProgramGraph, edges: &CallEdgeSet) -> Result<()> {
    write_file(path, edge_file_text(graph, edges)?)
}

/// An edge file opened by a `meta` header line.
pub fn edge_file_text_with_meta(
    graph: &ProgramGraph,
    edges: &CallEdgeSet,
    meta: &FileMeta,
) -> Result<String> {
    Ok(meta.header_line() + &edge_file_text(graph, edges)?)
}

pub fn edge_file_text(graph: &ProgramGraph, edges: &CallEdgeSet) -> Result<String> {
    let mut text = String::new();
    for r in edge_records(graph, edges)? {
        text.push_str(&serde_json::to_string(&r).expect("record serializes"));
        text.push('\n');
    }
    Ok(text)
}

/// Problem with one line of an input file; `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDiagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub edges: CallEdgeSet,
    pub diagnostics: Vec<RecordDiagnostic>,
    /// Well-formed records whose positions match no endpoint.
    pub unresolved: usize,
}

/// Smallest-enclosing-span lookup of call sites and function definitions.
pub struct SpanIndex {
    call_sites: HashMap<u32, Vec<(usize, usize, NodeId)>>,
    functions: HashMap<u32, Vec<(usize, usize, NodeId)>>,
    files: HashMap<String, u32>,
}

impl SpanIndex {
    pub fn new(graph: &ProgramGraph) -> Self {
        let mut call_sites: HashMap<u32, Vec<_>> = HashMap::new();
        let mut functions: HashMap<u32, Vec<_>> = HashMap::new();
        for n in graph.nodes.iter().filter(|n| !n.semantic) {
            let Some(file) = n.file else { continue };
            if n.kind.is_call_site() {
                call_sites
                    .entry(file)
                    .or_default()
                    .push((n.start, n.end, n.id));
            } else if n.kind.is_function() {
                functions
                    .entry(file)
                    .or_default()
                    .push((n.start, n.end, n.id));
            }
        }
        let files = graph
            .files
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i as u32))
            .collect();
        SpanIndex {
            call_sites,
            functions,
            files,
        }
    }

    fn smallest(
        list: Option<&Vec<(usize, usize, NodeId)>>,
        start: usize,
        end: usize,
    ) -> Option<NodeId> {
        list?
            .iter()
            .filter(|&&(s, e, _)| s <= start && end <= e)
            .min_by_key(|&&(s, e, id)| (e - s, std::cmp::Reverse(id)))
            .map(|&(_, _, id)| id)
    }

    /// Innermost call site whose span contains `[start, end)`.
    pub fn call_site(&self, file: &str, start: usize, end: usize) -> Option<NodeId> {
        let f = self.files.get(file)?;
        Self::smallest(self.call_sites.get(f), start, end)
    }

    /// Innermost call site containing the byte at `offset`.
    pub fn call_site_at(&self, file: &str, offset: usize) -> Option<NodeId> {
        let f = self.files.get(file)?;
        self.call_sites
            .get(f)?
            .iter()
            .filter(|&&(s, e, _)| s <= offset && offset < e)
            .min_by_key(|&&(s, e, id)| (e - s, std::cmp::Reverse(id)))
            .map(|&(_, _, id)| id)
    }

    pub fn function(&self, file: &str, start: usize, end: usize) -> Option<NodeId> {
        let f = self.files.get(file)?;
        Self::smallest(self.functions.get(f), start, end)
    }
}

/// Resolves edge records to node ids by smallest enclosing span.
///
/// Malformed lines and unresolvable records are reported, not fatal, unless
/// more than half of the well-formed records fail to resolve. A leading
/// [`FileMeta`] header line is skipped.
pub fn ingest_edge_text(text: &str, graph: &ProgramGraph) -> Result<IngestReport> {
    let index = SpanIndex::new(graph);
    let mut report = IngestReport::default();
    let mut total = 0;
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && FileMeta::from_header(line).is_some() {
            continue;
        }
        let record: EdgeRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                report.diagnostics.push(RecordDiagnostic {
                    line: i + 1,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        total += 1;
        let caller = index.call_site(&record.caller.file, record.caller.start, record.caller.end);
        let callee = index.function(&record.callee.file, record.callee.start, record.callee.end);
        match (caller, callee) {
            (Some(cs), Some(f)) => {
                let count = if record.provenance == Provenance::Dynamic {
                    record.count.max(1)
                } else {
                    0
                };
                report.edges.insert(CallEdge {
                    callsite: cs,
                    callee: f,
                    provenance: Provenances::only(record.provenance),
                    count,
                });
            }
            (cs, _) => {
                report.unresolved += 1;
                let (what, span) = if cs.is_none() {
                    ("call site", &record.caller)
                } else {
                    ("function definition", &record.callee)
                };
                report.diagnostics.push(RecordDiagnostic {
                    line: i + 1,
                    message: format!("no {what} encloses {span}"),
                });
            }
        }
    }
    if report.unresolved * 2 > total {
        return Err(Error::MostlyUnresolved {
            unresolved: report.unresolved,
            total,
        });
    }
    Ok(report)
}

pub fn ingest_static_edges(export_file: &Path, graph: &ProgramGraph) -> Result<IngestReport> {
    ingest_edge_text(&read_to_string(export_file)?, graph)
}

// ---------------------------------------------------------------------------
// Conservative resolver

/// Where an identifier occurrence sits with respect to the binding it names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Use {
    Read,
    Write,
    Bind,
    /// Not a variable reference at all (`o.x`, `{x: 1}`, labels, ...).
    Other,
}

fn classify(tree: &Tree<'_>, i: usize) -> Use {
    let node = tree.node(i);
    let Some(p) = tree.parent(i) else {
        return Use::Read;
    };
    let parent = tree.node(p);
    let in_pattern = |k: NodeKind| matches!(k, NodeKind::ObjectPattern | NodeKind::ArrayPattern);
    match (parent.kind, node.field.as_str()) {
        (NodeKind::MemberExpression, "property")
        | (NodeKind::MethodDefinition | NodeKind::PropertyDefinition, "key")
        | (
            NodeKind::LabeledStatement | NodeKind::BreakStatement | NodeKind::ContinueStatement,
            "label",
        )
        | (NodeKind::ImportSpecifier, "imported")
        | (NodeKind::ExportSpecifier, "exported") => Use::Other,
        (NodeKind::Property, "key") => {
            let shorthand = tree.child(p, "value").is_none();
            let owner = tree.parent(p).map(|o| tree.node(o).kind);
            match (shorthand, owner) {
                (true, Some(k)) if in_pattern(k) => Use::Bind,
                (true, _) => Use::Read,
                _ => Use::Other,
            }
        }
        (_, "id" | "params" | "param" | "local") => Use::Bind,
        (NodeKind::AssignmentExpression, "left") | (NodeKind::UpdateExpression, "argument") => {
            Use::Write
        }
        (NodeKind::ForInStatement | NodeKind::ForOfStatement, "left") => Use::Write,
        (NodeKind::RestElement, "argument") | (NodeKind::AssignmentPattern, "left") => Use::Bind,
        (k, _) if in_pattern(k) => Use::Bind,
        (NodeKind::Property, "value")
            if tree
                .parent(p)
                .is_some_and(|o| in_pattern(tree.node(o).kind)) =>
        {
            Use::Bind
        }
        _ => Use::Read,
    }
}

fn is_ancestor(tree: &Tree<'_>, anc: usize, mut i: usize) -> bool {
    while let Some(p) = tree.parent(i) {
        if p == anc {
            return true;
        }
        i = p;
    }
    false
}

/// Scope container of a declaration: the node whose subtree can see it.
fn declaration_scope(tree: &Tree<'_>, decl: usize) -> Option<usize> {
    let statement = match tree.node(decl).kind {
        NodeKind::FunctionDeclaration => decl,
        NodeKind::VariableDeclarator => tree.parent(decl)?,
        _ => return None,
    };
    let mut scope = tree.parent(statement)?;
    if matches!(
        tree.node(scope).kind,
        NodeKind::ExportNamedDeclaration | NodeKind::ExportDefaultDeclaration
    ) {
        scope = tree.parent(scope)?;
    }
    Some(scope)
}

/// The function a name is bound to, when the file binds it exactly once and
/// never reassigns it. Returns the function and its scope container.
fn unique_function_binding(
    tree: &Tree<'_>,
    occurrences: &[usize],
) -> Option<(usize, usize, usize)> {
    let mut binding = None;
    for &i in occurrences {
        match classify(tree, i) {
            Use::Write => return None,
            Use::Bind => {
                if binding.replace(i).is_some() {
                    return None;
                }
            }
            Use::Read | Use::Other => {}
        }
    }
    let binding = binding?;
    let decl = tree.parent(binding)?;
    let decl_node = tree.node(decl);
    let target = match decl_node.kind {
        NodeKind::FunctionDeclaration => decl,
        NodeKind::VariableDeclarator => {
            let init = tree.child(decl, "init")?;
            let k = tree.node(init).kind;
            if !matches!(
                k,
                NodeKind::FunctionExpression
                    | NodeKind::ArrowFunctionExpression
                    | NodeKind::ObjectExpression
            ) {
                return None;
            }
            init
        }
        _ => return None,
    };
    Some((binding, target, declaration_scope(tree, decl)?))
}

/// Conservative same-file resolution; never guesses under ambiguity.
///
/// Resolves `f()` to the file's only binding of `f` when that binding is a
/// function declaration or a variable initialised with a function, and
/// `o.m()` when `o` is the file's only binding, initialised with an object
/// literal holding exactly one non-computed property `m` whose value is a
/// function. Names that are ever reassigned are left alone, as are calls
/// outside the binding's scope.
pub fn heuristic_static_resolve(graph: &ProgramGraph) -> CallEdgeSet {
    let tree = Tree::new(graph);
    let mut names: HashMap<(u32, &str), Vec<usize>> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if n.kind == NodeKind::Identifier {
            if let (Some(file), Some(name)) = (n.file, n.name.as_deref()) {
                names.entry((file, name)).or_default().push(i);
            }
        }
    }
    let mut bindings = HashMap::new();
    let mut lookup = |file: u32, name: &str| -> Option<(usize, usize, usize)> {
        *bindings.entry((file, name.to_string())).or_insert_with(|| {
            unique_function_binding(&tree, names.get(&(file, name)).map_or(&[][..], |v| v))
        })
    };
    let member_writes: HashSet<(u32, String, String)> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == NodeKind::MemberExpression && n.field == "left")
        .filter_map(|(i, n)| {
            let object = tree.child(i, "object")?;
            let property = tree.child(i, "property")?;
            Some((
                n.file?,
                tree.node(object).name.clone()?,
                tree.node(property).name.clone()?,
            ))
        })
        .collect();
    let mut edges = CallEdgeSet::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if n.kind != NodeKind::CallExpression && n.kind != NodeKind::NewExpression {
            continue;
        }
        let (Some(file), Some(callee)) = (n.file, tree.child(i, "callee")) else {
            continue;
        };
        let callee_node = tree.node(callee);
        let target = match callee_node.kind {
            NodeKind::Identifier => {
                let name = callee_node.name.as_deref().unwrap_or_default();
                lookup(file, name).and_then(|(_, target, scope)| {
                    (tree.node(target).kind.is_function() && is_ancestor(&tree, scope, i))
                        .then_some(target)
                })
            }
            NodeKind::MemberExpression => (|| {
                let object = tree.child(callee, "object")?;
                let property = tree.child(callee, "property")?;
                let (oname, pname) = (
                    tree.node(object).name.as_deref()?,
                    tree.node(property).name.as_deref()?,
                );
                if tree.node(object).kind != NodeKind::Identifier
                    || member_writes.contains(&(file, oname.to_string(), pname.to_string()))
                {
                    return None;
                }
                let (_, obj, scope) = lookup(file, oname)?;
                if tree.node(obj).kind != NodeKind::ObjectExpression
                    || !is_ancestor(&tree, scope, i)
                {
                    return None;
                }
                let mut found = None;
                for &prop in &tree.children[obj] {
                    let pn = tree.node(prop);
                    if pn.kind != NodeKind::Property {
                        if pn.kind == NodeKind::SpreadElement {
                            return None;
                        }
                        continue;
                    }
                    let key = tree.child(prop, "key").map(|k| tree.node(k));
                    if key.and_then(|k| k.name.as_deref()) != Some(pname) {
                        continue;
                    }
                    let value = tree.child(prop, "value")?;
                    if found.is_some() || !tree.node(value).kind.is_function() {
                        return None;
                    }
                    found = Some(value);
                }
                found
            })(),
            _ => None,
        };
        if let Some(t) = target {
            edges.add(n.id, graph.nodes[t].id, Provenance::Static);
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// Merging and negatives

/// Union keyed by `(callsite, callee)`: provenances unioned, counts summed.
pub fn merge_edge_sets(graph: &ProgramGraph, sets: &[&CallEdgeSet]) -> Result<CallEdgeSet> {
    let mut out = CallEdgeSet::new();
    for set in sets {
        set.check_endpoints(graph)?;
        for e in set.iter() {
            out.insert(e);
        }
    }
    Ok(out)
}

/// `n` distinct uniformly random (call site, function) pairs that are not
/// positives. Deterministic in `seed`.
pub fn sample_negatives(
    graph: &ProgramGraph,
    positives: &CallEdgeSet,
    n: usize,
    seed: u64,
) -> Result<Vec<(NodeId, NodeId)>> {
    let (sites, defs) = enumerate_endpoints(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives_from(&sites, &defs, positives, n, &mut rng)
}

pub(crate) fn sample_negatives_from<R: Rng>(
    sites: &[NodeId],
    defs: &[NodeId],
    positives: &CallEdgeSet,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(NodeId, NodeId)>> {
    let site_set: HashSet<_> = sites.iter().collect();
    let def_set: HashSet<_> = defs.iter().collect();
    let covered = positives
        .pairs()
        .filter(|(c, f)| site_set.contains(c) && def_set.contains(f))
        .count();
    let total = sites.len() * defs.len();
    let available = total - covered;
    if n > available {
        return Err(Error::InfeasibleNegatives {
            requested: n,
            available,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n * 2 <= available {
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let pair = (
                sites[rng.gen_range(0..sites.len())],
                defs[rng.gen_range(0..defs.len())],
            );
            if !positives.contains(pair.0, pair.1) && seen.insert(pair) {
                out.push(pair);
            }
        }
        Ok(out)
    } else {
        let mut all: Vec<_> = sites
            .iter()
            .flat_map(|&c| defs.iter().map(move |&f| (c, f)))
            .filter(|&(c, f)| !positives.contains(c, f))
            .collect();
        let (picked, _) = all.partial_shuffle(rng, n);
        Ok(picked.to_vec())
    }
}
