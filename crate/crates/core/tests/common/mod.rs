//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use callsight::corpus::{synthetic_project, CorpusConfig};
use callsight::graph::graph_from_sources;
use callsight::model::net::{loss, loss_and_gradients, Batch, MessageGraph};
use callsight::model::{init_model, Hyperparams, ModelParams, NodeInputs, Tensors};
use callsight::truth::ingest_edge_text;
use callsight::{
    compute_features, default_prune_kinds, enumerate_endpoints, link_identifiers, prune,
    CallEdgeSet, Edge, EdgeType, GraphNode, NodeId, NodeKind, ProgramGraph,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn owned(sources: &[(&str, &str)]) -> Vec<(String, String)> {
    sources
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Parsed but not pruned or linked.
pub fn parse_only(sources: &[(&str, &str)]) -> ProgramGraph {
    let (g, diags) = graph_from_sources(&owned(sources));
    assert!(diags.is_empty(), "{diags:?}");
    g
}

/// Parsed, pruned with the default kinds, and linked.
pub fn build(sources: &[(&str, &str)]) -> ProgramGraph {
    link_identifiers(&prune(&parse_only(sources), &default_prune_kinds()).unwrap())
}

pub fn tiny_graph() -> ProgramGraph {
    build(&[(
        "a.js",
        "function f(a) { return a }\nf(1);\nvar g = function () { f(2) };\ng();\n",
    )])
}

/// First node of `kind` whose source text is exactly `text`.
pub fn find_node(
    graph: &ProgramGraph,
    sources: &[(&str, &str)],
    kind: NodeKind,
    text: &str,
) -> NodeId {
    graph
        .nodes
        .iter()
        .find(|n| {
            n.kind == kind
                && n.file.is_some_and(|f| {
                    let src = sources
                        .iter()
                        .find(|(p, _)| *p == graph.files[f as usize])
                        .unwrap()
                        .1;
                    &src[n.start..n.end] == text
                })
        })
        .unwrap_or_else(|| panic!("no {kind} node reading {text:?}"))
        .id
}

// ---------------------------------------------------------------------------
// The two motivating snippets: a call through `lexer.showPosition()` and the
// object literal defining `showPosition`.

pub const FIG_CALLER: &str = r#"var lexer = Object.create(this.lexer);
if (lexer.showPosition) {
    errStr = 'Parse error on line ' + (yylineno+1)
        + ":\n" + lexer.showPosition() + "\nExpecting "
        + expected.join(', ') + ", got '"
        + (this.terminals_[symbol] || symbol) + "'";
}
"#;

pub const FIG_CALLEE: &str = r#"var lexer = (function (){
  var lexer = ({
    showPosition: function () {
      var pre = this.pastInput();
      var c = new Array(pre.length + 1).join("-");
      return pre + this.upcomingInput() + "\n" + c + "^";
    }
  });
  return lexer;
})();
parser.lexer = lexer;
"#;

pub fn fig_sources() -> [(&'static str, &'static str); 2] {
    [("parser.js", FIG_CALLER), ("lexer.js", FIG_CALLEE)]
}

// ---------------------------------------------------------------------------
// Random trees and the nearest-surviving-ancestor oracle

const TREE_KINDS: &[NodeKind] = &[
    NodeKind::ExpressionStatement,
    NodeKind::BinaryExpression,
    NodeKind::LogicalExpression,
    NodeKind::Literal,
    NodeKind::ParenthesizedExpression,
    NodeKind::Identifier,
    NodeKind::CallExpression,
    NodeKind::BlockStatement,
    NodeKind::IfStatement,
    NodeKind::MemberExpression,
    NodeKind::ReturnStatement,
    NodeKind::FunctionDeclaration,
];

/// Random tree of `n` nodes under a Project root (id 0) and one Program
/// (id 1). The shape is a random recursive tree; ids are then assigned in
/// preorder, as the parser does, so id order is sibling order.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> ProgramGraph {
    let n = n.max(2);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 2..n {
        children[rng.gen_range(1..v)].push(v);
    }
    let kinds: Vec<NodeKind> = (0..n).map(|_| *TREE_KINDS.choose(rng).unwrap()).collect();
    // Shuffle sibling order so preorder numbering differs from creation order.
    for cs in &mut children {
        cs.shuffle(rng);
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![1];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(children[v].iter().rev());
    }
    let mut id_of = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        id_of[v] = i + 1;
    }
    let mut g = ProgramGraph::empty();
    g.files.push("t.js".into());
    for &v in &order {
        let id = id_of[v];
        let kind = if v == 1 { NodeKind::Program } else { kinds[v] };
        g.nodes.push(GraphNode {
            id,
            kind,
            name: (kind == NodeKind::Identifier).then(|| format!("v{}", id % 7)),
            file: Some(0),
            start: id,
            end: id + 1,
            semantic: false,
            field: String::new(),
            params: kind.is_function().then_some(0),
            args: kind.is_call_site().then_some(0),
        });
    }
    g.edges.push(Edge::new(0, 1, EdgeType::Ast));
    g.edges.push(Edge::new(1, 0, EdgeType::AstRev));
    for (v, cs) in children.iter().enumerate() {
        for &c in cs {
            g.edges.push(Edge::new(id_of[v], id_of[c], EdgeType::Ast));
            g.edges
                .push(Edge::new(id_of[c], id_of[v], EdgeType::AstRev));
        }
    }
    g.canonicalize();
    g.validate().unwrap();
    g
}

/// A random subset of the prunable kinds used by [`random_tree`].
pub fn random_prune_set(rng: &mut ChaCha8Rng) -> BTreeSet<NodeKind> {
    [
        NodeKind::ExpressionStatement,
        NodeKind::BinaryExpression,
        NodeKind::LogicalExpression,
        NodeKind::Literal,
        NodeKind::ParenthesizedExpression,
        NodeKind::BlockStatement,
        NodeKind::IfStatement,
    ]
    .into_iter()
    .filter(|_| rng.gen_bool(0.5))
    .collect()
}

pub fn ast_parent_map(g: &ProgramGraph) -> BTreeMap<NodeId, NodeId> {
    g.edges_of(EdgeType::Ast).map(|e| (e.dst, e.src)).collect()
}

/// For every node that survives removing `kinds`, its nearest surviving
/// proper ancestor, found by walking the original parent chain.
pub fn ancestor_oracle(g: &ProgramGraph, kinds: &BTreeSet<NodeKind>) -> BTreeMap<NodeId, NodeId> {
    let parent = ast_parent_map(g);
    let survives = |id: NodeId| !kinds.contains(&g.node(id).unwrap().kind);
    let mut out = BTreeMap::new();
    for n in &g.nodes {
        if n.semantic || !survives(n.id) {
            continue;
        }
        let mut p = parent.get(&n.id).copied();
        while let Some(a) = p {
            if survives(a) {
                out.insert(n.id, a);
                break;
            }
            p = parent.get(&a).copied();
        }
    }
    out
}

/// Preorder of the syntax tree, children visited in ascending id order.
pub fn preorder(g: &ProgramGraph) -> Vec<NodeId> {
    let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for e in g.edges_of(EdgeType::Ast) {
        children.entry(e.src).or_default().push(e.dst);
    }
    let mut out = Vec::new();
    let mut stack = vec![g.root];
    while let Some(id) = stack.pop() {
        out.push(id);
        if let Some(cs) = children.get(&id) {
            stack.extend(cs.iter().rev());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Random projects and the token-scan oracle

const NAMES: &[&str] = &[
    "a", "b", "foo", "bar", "baz", "lexer", "show", "item", "len", "value", "$x", "_y",
];
const KEYWORDS: &[&str] = &[
    "function", "var", "return", "if", "else", "new", "this", "true", "false", "null",
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).unwrap()
}

fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> String {
    let choice = if depth == 0 {
        rng.gen_range(0..4)
    } else {
        rng.gen_range(0..9)
    };
    match choice {
        0 => pick(rng, NAMES).to_string(),
        1 => ["1", "2.5", "1e5", "0x1f", ".5"]
            .choose(rng)
            .unwrap()
            .to_string(),
        2 => format!("\"{} {}\"", pick(rng, NAMES), pick(rng, KEYWORDS)),
        3 => format!("'it\\'s {}'", pick(rng, NAMES)),
        4 => format!(
            "{}({}, {})",
            pick(rng, NAMES),
            random_expr(rng, depth - 1),
            random_expr(rng, depth - 1)
        ),
        5 => format!("{}.{}", pick(rng, NAMES), pick(rng, NAMES)),
        6 => format!(
            "({} + {})",
            random_expr(rng, depth - 1),
            random_expr(rng, depth - 1)
        ),
        7 => format!(
            "{{ {}: {}, {}: 3 }}",
            pick(rng, NAMES),
            random_expr(rng, depth - 1),
            pick(rng, NAMES)
        ),
        _ => format!(
            "function ({}) {{ return {}; }}",
            pick(rng, NAMES),
            random_expr(rng, depth - 1)
        ),
    }
}

fn random_statement(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..6) {
        0 => format!("var {} = {};\n", pick(rng, NAMES), random_expr(rng, 2)),
        1 => format!(
            "function {}({}, {}) {{\n  return {};\n}}\n",
            pick(rng, NAMES),
            pick(rng, NAMES),
            pick(rng, NAMES),
            random_expr(rng, 2)
        ),
        2 => format!("{}({});\n", pick(rng, NAMES), random_expr(rng, 2)),
        3 => format!("// {} {} comment\n", pick(rng, NAMES), pick(rng, KEYWORDS)),
        4 => format!(
            "/* {} */ if ({}) {{ {} = {}; }}\n",
            pick(rng, NAMES),
            random_expr(rng, 1),
            pick(rng, NAMES),
            random_expr(rng, 1)
        ),
        _ => format!(
            "new {}({}).{}(this);\n",
            pick(rng, NAMES),
            random_expr(rng, 1),
            pick(rng, NAMES)
        ),
    }
}

/// A few files of random statements over a small identifier pool, with
/// comments, strings and numbers that a naive scan would miscount.
pub fn random_project(rng: &mut ChaCha8Rng) -> Vec<(String, String)> {
    (0..rng.gen_range(1..4))
        .map(|f| {
            let body: String = (0..rng.gen_range(3..12))
                .map(|_| random_statement(rng))
                .collect();
            (format!("f{f}.js"), body)
        })
        .collect()
}

/// Counts identifier tokens per name by scanning characters, skipping
/// comments, string literals, numbers and keywords.
pub fn token_scan(src: &str) -> BTreeMap<String, usize> {
    let b = src.as_bytes();
    let ident_start = |c: u8| c.is_ascii_alphabetic() || c == b'_' || c == b'$';
    let ident_part = |c: u8| ident_start(c) || c.is_ascii_digit();
    let mut counts = BTreeMap::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c == b'/' && b.get(i + 1) == Some(&b'/') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else if c == b'/' && b.get(i + 1) == Some(&b'*') {
            i += 2;
            while i + 1 < b.len() && !(b[i] == b'*' && b[i + 1] == b'/') {
                i += 1;
            }
            i += 2;
        } else if c == b'"' || c == b'\'' {
            i += 1;
            while i < b.len() && b[i] != c {
                i += if b[i] == b'\\' { 2 } else { 1 };
            }
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
            while i < b.len() && (ident_part(b[i]) || b[i] == b'.') {
                i += 1;
            }
        } else if ident_start(c) {
            let s = i;
            while i < b.len() && ident_part(b[i]) {
                i += 1;
            }
            let word = &src[s..i];
            if !KEYWORDS.contains(&word) {
                *counts.entry(word.to_string()).or_insert(0) += 1;
            }
        } else {
            i += 1;
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Model oracles

pub fn small_hp(layers: usize, hidden: usize) -> Hyperparams {
    Hyperparams {
        layers,
        hidden_dim: hidden,
        name_buckets: 16,
        seed: 7,
        ..Hyperparams::default()
    }
}

/// Randomises every tensor, including norm scales and shifts, so no
/// gradient is trivially zero.
pub fn randomised(params: &ModelParams, seed: u64) -> ModelParams {
    let mut p = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.tensors.for_each_mut(|_, d| {
        for x in d {
            *x = rng.gen_range(-0.5..0.5);
        }
    });
    p
}

pub struct GradCheck {
    pub checked: usize,
    pub agree: usize,
    pub nodes: usize,
    /// Tensors where no coordinate received a nonzero analytic gradient.
    pub untouched: Vec<String>,
    pub loss_matches: bool,
}

/// Central finite differences with `step` against the analytic gradient of
/// the loss over every (call site, definition) pair of [`tiny_graph`].
pub fn gradient_check(step: f64, tolerance: f64) -> GradCheck {
    let graph = tiny_graph();
    let features = compute_features(&graph);
    let params = randomised(&init_model(&small_hp(2, 6)).unwrap(), 3);
    let (sites, defs) = enumerate_endpoints(&graph);
    let dense = |id| graph.index_of(id).unwrap();
    let pairs: Vec<(usize, usize)> = sites
        .iter()
        .flat_map(|&c| defs.iter().map(move |&f| (c, f)))
        .map(|(c, f)| (dense(c), dense(f)))
        .collect();
    let labels: Vec<f64> = (0..pairs.len()).map(|i| (i % 2) as f64).collect();
    let mg = MessageGraph::new(&graph, &[(sites[0], defs[0])]).unwrap();
    let inputs = NodeInputs::new(&features, &params);
    let batch = Batch {
        graph: &mg,
        inputs: &inputs,
        pairs: &pairs,
        labels: &labels,
    };
    let (l0, grads) = loss_and_gradients(&params, &batch);
    let loss_matches = (l0 - loss(&params, &batch)).abs() < 1e-12;

    let mut flat = Vec::new();
    grads.for_each(|name, _, d| flat.extend(d.iter().map(|&g| (name.to_string(), g))));
    let mut agree = 0;
    let mut touched = BTreeSet::new();
    for (k, (name, analytic)) in flat.iter().enumerate() {
        let shifted = |delta: f64| {
            let mut p = params.clone();
            let mut i = 0;
            p.tensors.for_each_mut(|_, d| {
                if (i..i + d.len()).contains(&k) {
                    d[k - i] += delta;
                }
                i += d.len();
            });
            loss(&p, &batch)
        };
        let numeric = (shifted(step) - shifted(-step)) / (2.0 * step);
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-9 || (analytic - numeric).abs() / scale <= tolerance {
            agree += 1;
        }
        if *analytic != 0.0 {
            touched.insert(name.clone());
        }
    }
    let mut untouched = Vec::new();
    params.tensors.for_each(|n, _, _| {
        if !touched.contains(n) {
            untouched.push(n.to_string());
        }
    });
    GradCheck {
        checked: flat.len(),
        agree,
        nodes: graph.nodes.len(),
        untouched,
        loss_matches,
    }
}

pub fn ref_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(f, v)| (v - mean) / (var + 1e-5).sqrt() * (1.0 + gain[f]) + bias[f])
        .collect()
}

pub fn matvec(w: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    (0..w.nrows())
        .map(|r| (0..w.ncols()).map(|c| w[[r, c]] * x[c]).sum())
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight-line gated graph convolution over an explicit edge list.
/// `edges` are `(src j, dst i, type)`; messages flow from `j` into `i`.
pub fn reference_forward(
    h0: &Array2<f64>,
    edges: &[(usize, usize, usize)],
    t: &Tensors,
) -> Vec<Vec<f64>> {
    let n = h0.nrows();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| h0.row(i).to_vec()).collect();
    let mut e: Vec<Vec<f64>> = edges
        .iter()
        .map(|&(_, _, ty)| t.edge_emb.row(ty).to_vec())
        .collect();
    for p in &t.layers {
        let mut e_new = Vec::new();
        for (k, &(j, i, _)) in edges.iter().enumerate() {
            let a = matvec(&p.w3, &e[k]);
            let b = matvec(&p.w4, &h[i]);
            let c = matvec(&p.w5, &h[j]);
            let pre: Vec<f64> = (0..a.len()).map(|f| a[f] + b[f] + c[f]).collect();
            let nrm = ref_norm(
                &pre,
                p.edge_gain.as_slice().unwrap(),
                p.edge_bias.as_slice().unwrap(),
            );
            e_new.push(
                (0..pre.len())
                    .map(|f| e[k][f] + nrm[f].max(0.0))
                    .collect::<Vec<f64>>(),
            );
        }
        let mut h_new = Vec::new();
        for i in 0..n {
            let hd = h[i].len();
            let mut denom = vec![1e-6; hd];
            for (k, &(_, d, _)) in edges.iter().enumerate() {
                if d == i {
                    for f in 0..hd {
                        denom[f] += sig(e_new[k][f]);
                    }
                }
            }
            let mut pre = matvec(&p.w1, &h[i]);
            for (k, &(j, d, _)) in edges.iter().enumerate() {
                if d == i {
                    let m = matvec(&p.w2, &h[j]);
                    for f in 0..hd {
                        pre[f] += sig(e_new[k][f]) / denom[f] * m[f];
                    }
                }
            }
            let nrm = ref_norm(
                &pre,
                p.node_gain.as_slice().unwrap(),
                p.node_bias.as_slice().unwrap(),
            );
            h_new.push((0..hd).map(|f| h[i][f] + nrm[f].max(0.0)).collect());
        }
        h = h_new;
        e = e_new;
    }
    h
}

/// The 5-node toy graph used by the forward oracle.
pub const TOY_EDGES: &[(usize, usize, usize)] = &[
    (0, 1, 0),
    (1, 0, 1),
    (1, 2, 0),
    (2, 1, 1),
    (3, 2, 2),
    (2, 3, 3),
    (4, 3, 4),
    (3, 4, 4),
    (0, 2, 2),
];

// ---------------------------------------------------------------------------
// Synthetic name-match corpus

/// Graph and true edges of a synthetic project.
pub fn synthetic(cfg: &CorpusConfig) -> (ProgramGraph, CallEdgeSet) {
    let p = synthetic_project(cfg);
    let (g, diags) = graph_from_sources(&p.files);
    assert!(diags.is_empty(), "{diags:?}");
    let graph = link_identifiers(&prune(&g, &default_prune_kinds()).unwrap());
    let report = ingest_edge_text(&p.edge_text(), &graph).unwrap();
    assert_eq!(
        report.edges.len(),
        p.edges.len(),
        "every synthetic edge resolves"
    );
    (graph, report.edges)
}

/// Training settings for the 60-function corpus: a 200-epoch budget, with a
/// faster start and a more patient plateau schedule than the defaults.
pub fn corpus_hp() -> Hyperparams {
    Hyperparams {
        max_epochs: 200,
        lr_init: 3e-3,
        plateau_patience: 40,
        ..Hyperparams::default()
    }
}
