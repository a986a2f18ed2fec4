//! Triage operations over one loaded project, independent of transport.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use callsight::eval::rank_callsite;
use callsight::features::Tree;
use callsight::model::{Checkpoint, Predictor};
use callsight::truth::{edge_file_text, edge_records, merge_edge_sets};
use callsight::{
    compute_features, enumerate_endpoints, CallEdgeSet, NodeId, ProgramGraph, Provenance,
};

use crate::error::{TriageError, TriageResult};
use crate::log::{accepted_edges, fold, DecisionLog, TriageDecision, Verdict};
use crate::wire::{
    CandidateList, CandidateView, DecisionAck, DecisionRequest, Excerpt, ExportBody,
    UnresolvedList, UnresolvedSite,
};

/// Most lines shown in one excerpt.
pub const EXCERPT_LINES: usize = 8;

/// Source text of every graph file that is still readable and unchanged
/// since the graph was built, keyed by relative path.
pub fn load_sources(graph: &ProgramGraph) -> BTreeMap<String, String> {
    let Some(dir) = graph.project_dir() else {
        return BTreeMap::new();
    };
    graph
        .files
        .iter()
        .filter_map(|f| {
            let text = std::fs::read_to_string(dir.join(f)).ok()?;
            let digest = callsight::graph::sha256_hex(text.as_bytes());
            match graph.meta.input_digests.get(f) {
                Some(d) if *d != digest => None,
                _ => Some((f.clone(), text)),
            }
        })
        .collect()
}

/// Whole lines covering `start..end`, at most [`EXCERPT_LINES`] of them.
pub fn excerpt(source: &str, start: usize, end: usize) -> Option<Excerpt> {
    if start > end
        || end > source.len()
        || !source.is_char_boundary(start)
        || !source.is_char_boundary(end)
    {
        return None;
    }
    let from = source[..start].rfind('\n').map_or(0, |i| i + 1);
    let to = source[end..].find('\n').map_or(source.len(), |i| end + i);
    let mut text: String = source[from..to]
        .lines()
        .take(EXCERPT_LINES)
        .collect::<Vec<_>>()
        .join("\n");
    if source[from..to].lines().count() > EXCERPT_LINES {
        text.push_str("\n…");
    }
    Some(Excerpt {
        text,
        offset: from,
        line: source[..from].matches('\n').count() + 1,
    })
}

/// Call sites with no static edge, ordered by file then span.
pub fn list_unresolved(
    graph: &ProgramGraph,
    static_edges: &CallEdgeSet,
    sources: &BTreeMap<String, String>,
    decisions: &[TriageDecision],
) -> UnresolvedList {
    let (sites, _) = enumerate_endpoints(graph);
    let resolved: BTreeSet<NodeId> = static_edges.callsites().into_iter().collect();
    let state = fold(decisions);
    let tree = Tree::new(graph);
    let mut out: Vec<UnresolvedSite> = sites
        .iter()
        .filter(|s| !resolved.contains(s))
        .map(|&id| {
            let node = graph.node(id).expect("endpoint exists");
            let file = graph.file_name(node).unwrap_or_default().to_string();
            UnresolvedSite {
                callsite: id,
                excerpt: sources
                    .get(&file)
                    .and_then(|s| excerpt(s, node.start, node.end)),
                callee_name: tree
                    .callee_name(graph.index_of(id).unwrap())
                    .map(str::to_string),
                file,
                start: node.start,
                end: node.end,
                decision: state.get(&id).map(|d| d.verdict),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.file, a.start, a.end, a.callsite).cmp(&(&b.file, b.start, b.end, b.callsite))
    });
    UnresolvedList {
        decided: out.iter().filter(|s| s.decision.is_some()).count(),
        total_call_sites: sites.len(),
        sites: out,
    }
}

/// Static edges plus the accepted analyst edges, and the analyst edges
/// alone.
pub fn export_augmented(
    graph: &ProgramGraph,
    static_edges: &CallEdgeSet,
    decisions: &[TriageDecision],
) -> TriageResult<(CallEdgeSet, CallEdgeSet)> {
    let mut analyst = CallEdgeSet::new();
    for (c, f) in accepted_edges(decisions) {
        analyst.add(c, f, Provenance::Analyst);
    }
    let all = merge_edge_sets(graph, &[static_edges, &analyst])?;
    Ok((all, analyst))
}

/// A loaded project: graph, model, static edges and the decision log.
/// Everything but the log is read-only.
pub struct Triage {
    graph: ProgramGraph,
    predictor: Predictor,
    static_edges: CallEdgeSet,
    sources: BTreeMap<String, String>,
    call_sites: BTreeSet<NodeId>,
    function_defs: BTreeSet<NodeId>,
    log: Mutex<DecisionLog>,
}

impl Triage {
    pub fn new(
        graph: ProgramGraph,
        checkpoint: &Checkpoint,
        static_edges: CallEdgeSet,
        log: DecisionLog,
    ) -> TriageResult<Self> {
        static_edges.check_endpoints(&graph)?;
        let features = compute_features(&graph);
        let predictor = checkpoint.predictor(&graph, &features)?;
        let (sites, defs) = enumerate_endpoints(&graph);
        Ok(Triage {
            sources: load_sources(&graph),
            call_sites: sites.into_iter().collect(),
            function_defs: defs.into_iter().collect(),
            graph,
            predictor,
            static_edges,
            log: Mutex::new(log),
        })
    }

    /// Loads the graph, checkpoint and static edge file, and opens the log.
    pub fn open(graph: &Path, model: &Path, edges: &Path, log: &Path) -> TriageResult<Self> {
        let graph = ProgramGraph::load(graph)?;
        let checkpoint = Checkpoint::load(model)?;
        let static_edges = callsight::truth::ingest_static_edges(edges, &graph)?.edges;
        Triage::new(graph, &checkpoint, static_edges, DecisionLog::open(log)?)
    }

    pub fn graph(&self) -> &ProgramGraph {
        &self.graph
    }

    fn decisions(&self) -> Vec<TriageDecision> {
        self.log.lock().expect("log lock").entries().to_vec()
    }

    pub fn unresolved(&self) -> UnresolvedList {
        list_unresolved(
            &self.graph,
            &self.static_edges,
            &self.sources,
            &self.decisions(),
        )
    }

    /// The top `k` candidates for `callsite`.
    pub fn candidates(&self, callsite: NodeId, k: usize) -> TriageResult<CandidateList> {
        if !self.call_sites.contains(&callsite) {
            return Err(TriageError::UnknownCallsite(callsite));
        }
        let ranking = rank_callsite(&self.predictor, &self.graph, callsite, None)?;
        let tree = Tree::new(&self.graph);
        let candidates = ranking
            .top(k)
            .iter()
            .enumerate()
            .map(|(rank, c)| {
                let node = self.graph.node(c.callee).expect("candidate exists");
                let file = self.graph.file_name(node).unwrap_or_default().to_string();
                CandidateView {
                    rank,
                    callee: c.callee,
                    score: c.score,
                    kind: node.kind.as_str().to_string(),
                    name: tree
                        .function_name(self.graph.index_of(c.callee).unwrap())
                        .map(str::to_string),
                    excerpt: self
                        .sources
                        .get(&file)
                        .and_then(|s| excerpt(s, node.start, node.end)),
                    file,
                    start: node.start,
                    end: node.end,
                }
            })
            .collect();
        Ok(CandidateList {
            callsite,
            k,
            n: ranking.n,
            candidates,
        })
    }

    /// Validates and durably appends a decision.
    pub fn record(&self, req: DecisionRequest) -> TriageResult<DecisionAck> {
        if !self.call_sites.contains(&req.callsite) {
            return Err(TriageError::Validation(format!(
                "node {} is not a call site",
                req.callsite
            )));
        }
        match (req.verdict, req.callee) {
            (Verdict::Accepted, None) => {
                return Err(TriageError::Validation(
                    "an accepted decision needs a callee".into(),
                ))
            }
            (_, Some(f)) if !self.function_defs.contains(&f) => {
                return Err(TriageError::Validation(format!(
                    "node {f} is not one of the project's function definitions"
                )))
            }
            _ => {}
        }
        let timestamp = req.timestamp.unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64)
        });
        let mut log = self.log.lock().expect("log lock");
        let decision = TriageDecision {
            id: log.next_id(),
            callsite: req.callsite,
            callee: req.callee,
            verdict: req.verdict,
            analyst: req.analyst,
            timestamp,
        };
        log.append(decision.clone())?;
        Ok(DecisionAck {
            id: decision.id,
            decision,
        })
    }

    pub fn export(&self) -> TriageResult<ExportBody> {
        let (all, analyst) = export_augmented(&self.graph, &self.static_edges, &self.decisions())?;
        Ok(ExportBody {
            edges: edge_records(&self.graph, &all)?,
            analyst_edges: edge_records(&self.graph, &analyst)?,
        })
    }

    /// The augmented edge set in the edge-file format.
    pub fn export_text(&self) -> TriageResult<String> {
        let (all, _) = export_augmented(&self.graph, &self.static_edges, &self.decisions())?;
        Ok(edge_file_text(&self.graph, &all)?)
    }
}
