//! Edge splits, candidate ranking, rank summaries, balanced ROC, edge
//! categories, and the cross-project transfer harness.
//!
//! Ranks are 0-based and pessimistic: the true callee's rank counts every
//! candidate scoring strictly higher plus every *other* candidate scoring
//! equally, so ties always count against the model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use callsight_js::NodeKind;

use crate::error::{Error, Result};
use crate::features::{compute_features, enumerate_endpoints, Tree};
use crate::graph::{Edge, EdgeType, GraphNode, NodeId, ProgramGraph};
use crate::model::{train, Hyperparams, Predictor, TrainReport};
use crate::truth::{check_endpoint, CallEdge, CallEdgeSet};

/// Largest `k` reported by hit@k curves.
pub const MAX_K: usize = 20;

// ---------------------------------------------------------------------------
// Splits

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: CallEdgeSet,
    pub val: CallEdgeSet,
    pub test: CallEdgeSet,
}

/// Seeded shuffle, then contiguous train / validation / test parts. The
/// train and validation sizes are `round(n · ratio)`; the test part takes the
/// remainder.
pub fn split_edges(edges: &CallEdgeSet, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r))
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Hyperparams(
            "split fractions must lie in [0, 1] and sum to 1".into(),
        ));
    }
    let mut all: Vec<CallEdge> = edges.iter().collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = all.len();
    let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
    let mut splits = Splits::default();
    for (i, e) in all.into_iter().enumerate() {
        let part = if i < n_train {
            &mut splits.train
        } else if i < n_train + n_val {
            &mut splits.val
        } else {
            &mut splits.test
        };
        part.insert(e);
    }
    if n >= 10 {
        for (name, part) in [
            ("train", &splits.train),
            ("validation", &splits.val),
            ("test", &splits.test),
        ] {
            if part.is_empty() {
                return Err(Error::EmptySplit(name));
            }
        }
    }
    Ok(splits)
}

// ---------------------------------------------------------------------------
// Ranking

/// Anything that can score candidate callees for a call site.
pub trait PairScorer {
    /// One probability per candidate, in candidate order.
    fn score(&self, callsite: NodeId, candidates: &[NodeId]) -> Result<Vec<f64>>;
}

impl PairScorer for Predictor {
    fn score(&self, callsite: NodeId, candidates: &[NodeId]) -> Result<Vec<f64>> {
        let pairs: Vec<_> = candidates.iter().map(|&f| (callsite, f)).collect();
        self.score_pairs(&pairs)
    }
}

impl<F: Fn(NodeId, &[NodeId]) -> Vec<f64>> PairScorer for F {
    fn score(&self, callsite: NodeId, candidates: &[NodeId]) -> Result<Vec<f64>> {
        Ok(self(callsite, candidates))
    }
}

/// Pessimistic 0-based rank of `scores[target]`.
pub fn pessimistic_rank(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i != target))
        .count()
}

/// Optimistic counterpart: only strictly higher scores count.
pub fn optimistic_rank(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    scores.iter().filter(|&&s| s > t).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub callee: NodeId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRanking {
    pub callsite: NodeId,
    /// Every candidate, by descending score (ties by ascending id).
    pub candidates: Vec<Candidate>,
    pub true_callee: Option<NodeId>,
    pub rank: Option<usize>,
    pub n: usize,
}

impl CandidateRanking {
    pub fn top(&self, k: usize) -> &[Candidate] {
        &self.candidates[..k.min(self.candidates.len())]
    }
}

/// Ranks every function definition of the project for one call site.
pub fn rank_callsite(
    scorer: &dyn PairScorer,
    graph: &ProgramGraph,
    callsite: NodeId,
    true_callee: Option<NodeId>,
) -> Result<CandidateRanking> {
    let (_, defs) = enumerate_endpoints(graph);
    rank_among(scorer, graph, &defs, callsite, true_callee)
}

fn rank_among(
    scorer: &dyn PairScorer,
    graph: &ProgramGraph,
    defs: &[NodeId],
    callsite: NodeId,
    true_callee: Option<NodeId>,
) -> Result<CandidateRanking> {
    check_endpoint(graph, callsite, true)?;
    let target = match true_callee {
        Some(t) => Some(defs.binary_search(&t).map_err(|_| Error::NotACandidate {
            callsite,
            callee: t,
        })?),
        None => None,
    };
    let scores = scorer.score(callsite, defs)?;
    if scores.len() != defs.len() {
        return Err(Error::Invalid(format!(
            "scorer returned {} scores for {} candidates",
            scores.len(),
            defs.len()
        )));
    }
    let rank = target.map(|t| pessimistic_rank(&scores, t));
    let mut candidates: Vec<Candidate> = defs
        .iter()
        .zip(&scores)
        .map(|(&callee, &score)| Candidate { callee, score })
        .collect();
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.callee.cmp(&b.callee)));
    Ok(CandidateRanking {
        callsite,
        candidates,
        true_callee,
        rank,
        n: defs.len(),
    })
}

// ---------------------------------------------------------------------------
// Summaries

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    IndirectApplyCall,
    HigherOrder,
    AnonymousCallee,
    CrossFileDiffName,
    CrossFileSameName,
    SameFileDirect,
}

impl Category {
    /// Precedence order: an edge takes the first label that applies.
    pub const ALL: [Category; 6] = [
        Category::IndirectApplyCall,
        Category::HigherOrder,
        Category::AnonymousCallee,
        Category::CrossFileDiffName,
        Category::CrossFileSameName,
        Category::SameFileDirect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::IndirectApplyCall => "indirect_apply_call",
            Category::HigherOrder => "higher_order",
            Category::AnonymousCallee => "anonymous_callee",
            Category::CrossFileDiffName => "cross_file_diff_name",
            Category::CrossFileSameName => "cross_file_same_name",
            Category::SameFileDirect => "same_file_direct",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub edges: usize,
    pub hit_at_1: f64,
    pub hit_at_5: f64,
}

/// Rank statistics over a set of test edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub test_edges: usize,
    pub call_sites: usize,
    pub candidates: usize,
    /// Edges at rank `0..MAX_K-1`, then everything at rank `MAX_K` or worse.
    pub histogram: Vec<usize>,
    /// `hit_at[k-1]` is the share of edges with rank `< k`, for `k = 1..=MAX_K`.
    pub hit_at: Vec<f64>,
    pub mean_rank: f64,
    pub categories: BTreeMap<Category, CategoryStats>,
    pub runtime_secs: f64,
}

impl EvalSummary {
    pub fn hit(&self, k: usize) -> f64 {
        assert!(
            (1..=MAX_K).contains(&k),
            "hit@k is reported for k in 1..={MAX_K}"
        );
        self.hit_at[k - 1]
    }

    /// Summary of explicit ranks, without category breakdown.
    pub fn from_ranks(ranks: &[usize], call_sites: usize, candidates: usize) -> EvalSummary {
        let n = ranks.len();
        let mut histogram = vec![0; MAX_K + 1];
        for &r in ranks {
            histogram[r.min(MAX_K)] += 1;
        }
        let mut hit_at = Vec::with_capacity(MAX_K);
        let mut below = 0;
        for &h in &histogram[..MAX_K] {
            below += h;
            hit_at.push(if n == 0 { 0.0 } else { below as f64 / n as f64 });
        }
        EvalSummary {
            test_edges: n,
            call_sites,
            candidates,
            histogram,
            hit_at,
            mean_rank: if n == 0 {
                0.0
            } else {
                ranks.iter().sum::<usize>() as f64 / n as f64
            },
            categories: BTreeMap::new(),
            runtime_secs: 0.0,
        }
    }
}

/// One ranked test edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRank {
    pub callsite: NodeId,
    pub callee: NodeId,
    pub rank: usize,
    pub category: Category,
}

/// Rankings of every test edge plus their summary.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub summary: EvalSummary,
    pub edges: Vec<EdgeRank>,
    /// One ranking per distinct test call site, in call-site order.
    pub rankings: Vec<CandidateRanking>,
}

/// Ranks every test edge among all of the project's function definitions.
/// A call site with several true callees contributes one rank per edge.
pub fn evaluate(
    scorer: &dyn PairScorer,
    graph: &ProgramGraph,
    test_edges: &CallEdgeSet,
) -> Result<Evaluation> {
    let started = Instant::now();
    test_edges.check_endpoints(graph)?;
    let (_, defs) = enumerate_endpoints(graph);
    let categorizer = Categorizer::new(graph);
    let mut by_site: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (c, f) in test_edges.pairs() {
        by_site.entry(c).or_default().push(f);
    }
    let mut edges = Vec::with_capacity(test_edges.len());
    let mut rankings = Vec::with_capacity(by_site.len());
    for (&cs, callees) in &by_site {
        let ranking = rank_among(scorer, graph, &defs, cs, None)?;
        let scores: Vec<f64> = {
            let by_id: BTreeMap<NodeId, f64> = ranking
                .candidates
                .iter()
                .map(|c| (c.callee, c.score))
                .collect();
            defs.iter().map(|d| by_id[d]).collect()
        };
        for &f in callees {
            let t = defs.binary_search(&f).map_err(|_| Error::NotACandidate {
                callsite: cs,
                callee: f,
            })?;
            edges.push(EdgeRank {
                callsite: cs,
                callee: f,
                rank: pessimistic_rank(&scores, t),
                category: categorizer.categorize(cs, f)?,
            });
        }
        rankings.push(ranking);
    }
    let ranks: Vec<usize> = edges.iter().map(|e| e.rank).collect();
    let mut summary = EvalSummary::from_ranks(&ranks, by_site.len(), defs.len());
    for cat in Category::ALL {
        let rs: Vec<usize> = edges
            .iter()
            .filter(|e| e.category == cat)
            .map(|e| e.rank)
            .collect();
        if !rs.is_empty() {
            let s = EvalSummary::from_ranks(&rs, 0, defs.len());
            summary.categories.insert(
                cat,
                CategoryStats {
                    edges: rs.len(),
                    hit_at_1: s.hit(1),
                    hit_at_5: s.hit(5),
                },
            );
        }
    }
    summary.runtime_secs = started.elapsed().as_secs_f64();
    Ok(Evaluation {
        summary,
        edges,
        rankings,
    })
}

/// Size-weighted mean of per-project summaries, weighting each project by
/// its test-edge count (equal weights if every project is empty).
pub fn aggregate_weighted(summaries: &[EvalSummary]) -> Result<EvalSummary> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::Invalid("aggregate of zero summaries".into()))?;
    let total: usize = summaries.iter().map(|s| s.test_edges).sum();
    let weight = |s: &EvalSummary| {
        if total == 0 {
            1.0 / summaries.len() as f64
        } else {
            s.test_edges as f64 / total as f64
        }
    };
    let mut out = EvalSummary {
        test_edges: total,
        call_sites: summaries.iter().map(|s| s.call_sites).sum(),
        candidates: first.candidates,
        histogram: vec![0; MAX_K + 1],
        hit_at: vec![0.0; MAX_K],
        mean_rank: 0.0,
        categories: BTreeMap::new(),
        runtime_secs: summaries.iter().map(|s| s.runtime_secs).sum(),
    };
    let mut cat_acc: BTreeMap<Category, (usize, f64, f64)> = BTreeMap::new();
    for s in summaries {
        let w = weight(s);
        for (o, h) in out.histogram.iter_mut().zip(&s.histogram) {
            *o += h;
        }
        for (o, h) in out.hit_at.iter_mut().zip(&s.hit_at) {
            *o += w * h;
        }
        out.mean_rank += w * s.mean_rank;
        out.candidates = out.candidates.max(s.candidates);
        for (&cat, st) in &s.categories {
            let acc = cat_acc.entry(cat).or_default();
            acc.0 += st.edges;
            acc.1 += st.edges as f64 * st.hit_at_1;
            acc.2 += st.edges as f64 * st.hit_at_5;
        }
    }
    for (cat, (n, h1, h5)) in cat_acc {
        out.categories.insert(
            cat,
            CategoryStats {
                edges: n,
                hit_at_1: h1 / n as f64,
                hit_at_5: h5 / n as f64,
            },
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Balanced ROC

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over every distinct score, with trapezoid-rule area.
pub fn roc_from_scores(positives: &[f64], negatives: &[f64]) -> Result<Roc> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Invalid(
            "ROC needs at least one positive and one negative".into(),
        ));
    }
    let mut labelled: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    labelled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let mut i = 0;
    while i < labelled.len() {
        let s = labelled[i].0;
        while i < labelled.len() && labelled[i].0 == s {
            if labelled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp as f64 / nn, tp as f64 / np);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(Roc { points, auc })
}

/// ROC of a scorer on equally many positive and negative pairs.
pub fn balanced_roc(
    scorer: &dyn PairScorer,
    positives: &[(NodeId, NodeId)],
    negatives: &[(NodeId, NodeId)],
) -> Result<Roc> {
    if positives.len() != negatives.len() {
        return Err(Error::Invalid(format!(
            "balanced ROC needs equal sets, got {} positives and {} negatives",
            positives.len(),
            negatives.len()
        )));
    }
    let score_all = |pairs: &[(NodeId, NodeId)]| -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(c, f)| Ok(scorer.score(c, &[f])?[0]))
            .collect()
    };
    roc_from_scores(&score_all(positives)?, &score_all(negatives)?)
}

/// Two scorers over the same constructed candidate sets, compared by
/// balanced AUC and by rank-0 share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricContrast {
    pub call_sites: usize,
    pub candidates_per_site: usize,
    pub auc_a: f64,
    pub auc_b: f64,
    pub hit_at_1_a: f64,
    pub hit_at_1_b: f64,
}

/// Builds `sites` call sites with `m` candidates each. Scorer A ranks one
/// decoy above the true callee and every other candidate below it; scorer B
/// ranks the true callee first. Balanced negatives are drawn evenly from
/// the non-true candidates, so A loses only the rare decoy comparisons in
/// AUC (≈ `1 − 1/(m−1)`) while never ranking the true callee first.
pub fn ranking_vs_roc_contrast(sites: usize, m: usize) -> Result<MetricContrast> {
    if m < 3 || sites == 0 {
        return Err(Error::Invalid(
            "need at least one site and three candidates".into(),
        ));
    }
    // Candidate 0 is the true callee, candidate 1 the decoy.
    let others = |j: usize| 0.5 * j as f64 / m as f64;
    let score_a = |j: usize| match j {
        0 => 0.8,
        1 => 0.9,
        _ => others(j),
    };
    let score_b = |j: usize| match j {
        0 => 0.95,
        1 => 0.7,
        _ => others(j),
    };
    let mut out = MetricContrast {
        call_sites: sites,
        candidates_per_site: m,
        auc_a: 0.0,
        auc_b: 0.0,
        hit_at_1_a: 0.0,
        hit_at_1_b: 0.0,
    };
    for (score, auc, hit) in [
        (
            &score_a as &dyn Fn(usize) -> f64,
            &mut out.auc_a,
            &mut out.hit_at_1_a,
        ),
        (&score_b, &mut out.auc_b, &mut out.hit_at_1_b),
    ] {
        let mut pos = Vec::with_capacity(sites);
        let mut neg = Vec::with_capacity(sites);
        let mut top = 0;
        for i in 0..sites {
            let scores: Vec<f64> = (0..m).map(score).collect();
            if pessimistic_rank(&scores, 0) == 0 {
                top += 1;
            }
            pos.push(scores[0]);
            neg.push(scores[1 + i % (m - 1)]);
        }
        *auc = roc_from_scores(&pos, &neg)?.auc;
        *hit = top as f64 / sites as f64;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Edge categories

/// Assigns each edge one [`Category`], first match in precedence order.
pub struct Categorizer<'g> {
    tree: Tree<'g>,
}

impl<'g> Categorizer<'g> {
    pub fn new(graph: &'g ProgramGraph) -> Self {
        Categorizer {
            tree: Tree::new(graph),
        }
    }

    pub fn categorize(&self, callsite: NodeId, callee: NodeId) -> Result<Category> {
        let graph = self.tree.graph;
        check_endpoint(graph, callsite, true)?;
        check_endpoint(graph, callee, false)?;
        let cs = graph.index_of(callsite).unwrap();
        let f = graph.index_of(callee).unwrap();
        let t = &self.tree;
        let callee_expr = t.child(cs, "callee");
        if let Some(c) = callee_expr {
            if t.node(c).kind == NodeKind::MemberExpression
                && matches!(t.reference_name(c), Some("call" | "apply"))
            {
                return Ok(Category::IndirectApplyCall);
            }
        }
        if self.passed_or_returned(f) || callee_expr.is_some_and(|c| self.is_enclosing_param(cs, c))
        {
            return Ok(Category::HigherOrder);
        }
        if t.child(f, "id").is_none() {
            return Ok(Category::AnonymousCallee);
        }
        if t.node(cs).file != t.node(f).file {
            return Ok(if t.callee_name(cs) == t.function_name(f) {
                Category::CrossFileSameName
            } else {
                Category::CrossFileDiffName
            });
        }
        Ok(Category::SameFileDirect)
    }

    /// The function value is a call argument or is returned.
    fn passed_or_returned(&self, f: usize) -> bool {
        let t = &self.tree;
        let Some(p) = t.parent(f) else { return false };
        let field = t.node(f).field.as_str();
        match t.node(p).kind {
            NodeKind::CallExpression | NodeKind::NewExpression => field == "arguments",
            NodeKind::ReturnStatement => true,
            NodeKind::ArrowFunctionExpression => field == "body",
            _ => false,
        }
    }

    /// The callee is an identifier naming a parameter of a function that
    /// encloses the call.
    fn is_enclosing_param(&self, cs: usize, callee: usize) -> bool {
        let t = &self.tree;
        if t.node(callee).kind != NodeKind::Identifier {
            return false;
        }
        let name = t.node(callee).name.as_deref();
        let mut at = t.parent(cs);
        while let Some(a) = at {
            if t.node(a).kind.is_function() {
                let hit = t.children[a]
                    .iter()
                    .filter(|&&c| t.node(c).field == "params")
                    .any(|&c| self.param_names(c).contains(&name));
                if hit {
                    return true;
                }
            }
            at = t.parent(a);
        }
        false
    }

    fn param_names(&self, p: usize) -> Vec<Option<&'g str>> {
        let t = &self.tree;
        match t.node(p).kind {
            NodeKind::Identifier => vec![t.node(p).name.as_deref()],
            NodeKind::AssignmentPattern | NodeKind::RestElement => t.children[p]
                .iter()
                .filter(|&&c| {
                    t.node(c).kind == NodeKind::Identifier
                        && matches!(t.node(c).field.as_str(), "left" | "argument")
                })
                .map(|&c| t.node(c).name.as_deref())
                .collect(),
            _ => Vec::new(),
        }
    }
}

pub fn categorize_edge(graph: &ProgramGraph, edge: &CallEdge) -> Result<Category> {
    Categorizer::new(graph).categorize(edge.callsite, edge.callee)
}

// ---------------------------------------------------------------------------
// Transfer between projects

/// One project of a transfer study.
#[derive(Debug, Clone)]
pub struct TransferProject {
    pub name: String,
    pub graph: ProgramGraph,
    pub edges: CallEdgeSet,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub held_out: String,
    pub summary: EvalSummary,
    pub train_report: TrainReport,
    /// Node ids used by the fold's training projects (without the shared
    /// root) and by the held-out project.
    pub train_id_range: (NodeId, NodeId),
    pub held_out_id_range: (NodeId, NodeId),
}

/// Copy of `graph` with every node id increased by `offset` and file paths
/// prefixed with `prefix/`.
pub fn offset_graph(graph: &ProgramGraph, offset: NodeId, prefix: &str) -> ProgramGraph {
    let mut g = graph.clone();
    for n in &mut g.nodes {
        n.id += offset;
    }
    for e in &mut g.edges {
        e.src += offset;
        e.dst += offset;
    }
    g.root += offset;
    for f in &mut g.files {
        *f = format!("{prefix}/{f}");
    }
    g
}

pub fn offset_edges(edges: &CallEdgeSet, offset: NodeId) -> CallEdgeSet {
    edges
        .iter()
        .map(|e| CallEdge {
            callsite: e.callsite + offset,
            callee: e.callee + offset,
            ..e
        })
        .collect()
}

/// Joins graphs (already id-disjoint, each above id 0) as separate
/// components under a fresh root with id 0.
pub fn concat_graphs(parts: &[&ProgramGraph]) -> Result<ProgramGraph> {
    let mut out = ProgramGraph::empty();
    let mut used = BTreeSet::new();
    for g in parts {
        let file_base = out.files.len() as u32;
        for n in &g.nodes {
            if n.id == 0 || !used.insert(n.id) {
                return Err(Error::Invalid(format!(
                    "node id {} is not disjoint across graphs",
                    n.id
                )));
            }
            let mut n: GraphNode = n.clone();
            n.file = n.file.map(|f| f + file_base);
            out.nodes.push(n);
        }
        out.edges.extend(g.edges.iter().copied());
        out.edges.push(Edge::new(out.root, g.root, EdgeType::Ast));
        out.edges
            .push(Edge::new(g.root, out.root, EdgeType::AstRev));
        out.files.extend(g.files.iter().cloned());
        out.meta.input_digests.extend(g.meta.input_digests.clone());
        out.meta.prune_kinds = g.meta.prune_kinds.clone();
    }
    out.canonicalize();
    out.validate()?;
    Ok(out)
}

/// Smallest and largest node id, ignoring the synthetic root added by
/// [`concat_graphs`].
fn id_range(graph: &ProgramGraph) -> (NodeId, NodeId) {
    let mut ids = graph
        .nodes
        .iter()
        .map(|n| n.id)
        .filter(|&id| id != graph.root);
    let first = ids.next().unwrap_or(graph.root);
    (first, ids.next_back().unwrap_or(first))
}

/// Leave-one-project-out folds: for each project, train on the union of the
/// others and evaluate on the held-out project's test split, with its own
/// training split as message edges.
pub fn transfer_eval(projects: &[TransferProject], hp: &Hyperparams) -> Result<Vec<FoldResult>> {
    if projects.len() < 2 {
        return Err(Error::Invalid(
            "transfer needs at least two projects".into(),
        ));
    }
    let mut offsets = Vec::with_capacity(projects.len());
    let mut next = 1;
    for p in projects {
        offsets.push(next);
        next += p.graph.next_id();
    }
    let range = |i: usize| (offsets[i], offsets[i] + projects[i].graph.next_id() - 1);
    let shifted: Vec<ProgramGraph> = projects
        .iter()
        .zip(&offsets)
        .map(|(p, &o)| offset_graph(&p.graph, o, &p.name))
        .collect();
    let mut folds = Vec::with_capacity(projects.len());
    for held in 0..projects.len() {
        let others: Vec<usize> = (0..projects.len()).filter(|&i| i != held).collect();
        let train_graph = concat_graphs(&others.iter().map(|&i| &shifted[i]).collect::<Vec<_>>())?;
        let (lo, hi) = range(held);
        assert!(
            train_graph.nodes.iter().all(|n| n.id < lo || n.id > hi),
            "held-out project ids leaked into the training graph"
        );
        let mut train_edges = CallEdgeSet::new();
        for &i in &others {
            for e in offset_edges(&projects[i].edges, offsets[i]).iter() {
                train_edges.insert(e);
            }
        }
        let features = compute_features(&train_graph);
        let outcome = train(&train_graph, &features, &train_edges, hp)?;

        let held_graph = &shifted[held];
        let held_edges = offset_edges(&projects[held].edges, offsets[held]);
        let splits = split_edges(&held_edges, hp.split, hp.seed)?;
        let messages: Vec<_> = if hp.train_edges_in_graph {
            splits.train.pairs().collect()
        } else {
            Vec::new()
        };
        let predictor = Predictor::new(
            outcome.params,
            held_graph,
            &compute_features(held_graph),
            &messages,
        )?;
        let evaluation = evaluate(&predictor, held_graph, &splits.test)?;
        folds.push(FoldResult {
            held_out: projects[held].name.clone(),
            summary: evaluation.summary,
            train_report: outcome.report,
            train_id_range: id_range(&train_graph),
            held_out_id_range: (lo, hi),
        });
    }
    Ok(folds)
}

// ---------------------------------------------------------------------------
// Output files

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub callsite: NodeId,
    pub candidates: Vec<Candidate>,
    pub true_callee: Option<NodeId>,
    pub rank: Option<usize>,
    pub category: Option<Category>,
}

/// Newline-delimited prediction records, one per test edge, each listing
/// the call site's top `k` candidates.
pub fn predictions_text(evaluation: &Evaluation, k: usize) -> String {
    let by_site: BTreeMap<NodeId, &CandidateRanking> = evaluation
        .rankings
        .iter()
        .map(|r| (r.callsite, r))
        .collect();
    let mut out = String::new();
    for e in &evaluation.edges {
        let record = PredictionRecord {
            callsite: e.callsite,
            candidates: by_site[&e.callsite].top(k).to_vec(),
            true_callee: Some(e.callee),
            rank: Some(e.rank),
            category: Some(e.category),
        };
        out.push_str(&serde_json::to_string(&record).expect("prediction records serialize"));
        out.push('\n');
    }
    out
}

/// Bar chart of a rank histogram as a standalone SVG document.
pub fn histogram_svg(title: &str, histogram: &[usize]) -> String {
    let (w, h, pad) = (640.0, 320.0, 40.0);
    let max = histogram.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = (w - 2.0 * pad) / histogram.len().max(1) as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        w / 2.0,
        escape_xml(title)
    );
    for (i, &count) in histogram.iter().enumerate() {
        let bh = (h - 2.0 * pad) * count as f64 / max;
        let x = pad + i as f64 * bw;
        let label = if i + 1 == histogram.len() && histogram.len() > MAX_K {
            format!("{i}+")
        } else {
            i.to_string()
        };
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"#4878a8\"><title>rank {label}: {count}</title></rect>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">{label}</text>\n",
            h - pad - bh,
            bw * 0.9,
            x + bw * 0.45,
            h - pad + 12.0,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
