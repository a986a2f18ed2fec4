mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use callsight::corpus::{synthetic_project, CorpusConfig};
use callsight::graph::graph_from_sources;
use callsight::truth::{
    edge_file_text, edge_file_text_with_meta, heuristic_static_resolve, ingest_edge_text,
    merge_edge_sets, sample_negatives, SpanRef,
};
use callsight::{
    default_prune_kinds, enumerate_endpoints, link_identifiers, prune, CallEdgeSet, FileMeta,
    NodeId, NodeKind, ProgramGraph, Provenance,
};
use common::{build, find_node};

/// Smallest node satisfying `pred` in `file` whose span encloses `[s, e)`,
/// found by scanning every node.
fn smallest_enclosing(
    g: &ProgramGraph,
    file: &str,
    s: usize,
    e: usize,
    pred: fn(NodeKind) -> bool,
) -> Option<NodeId> {
    g.nodes
        .iter()
        .filter(|n| {
            !n.semantic
                && pred(n.kind)
                && g.file_name(n) == Some(file)
                && n.start <= s
                && e <= n.end
        })
        .min_by_key(|n| (n.end - n.start, std::cmp::Reverse(n.id)))
        .map(|n| n.id)
}

#[test]
fn ingested_records_resolve_to_the_smallest_enclosing_endpoints() {
    for seed in 0..5 {
        let p = synthetic_project(&CorpusConfig {
            functions: 30,
            files: 3,
            alias_fraction: 0.3,
            seed,
            ..CorpusConfig::default()
        });
        let (g, diags) = graph_from_sources(&p.files);
        assert!(diags.is_empty());
        let g = link_identifiers(&prune(&g, &default_prune_kinds()).unwrap());
        let report = ingest_edge_text(&p.edge_text(), &g).unwrap();
        assert!(report.diagnostics.is_empty());
        let mut expected = CallEdgeSet::new();
        for r in &p.edges {
            let cs = smallest_enclosing(
                &g,
                &r.caller.file,
                r.caller.start,
                r.caller.end,
                NodeKind::is_call_site,
            )
            .unwrap();
            let f = smallest_enclosing(
                &g,
                &r.callee.file,
                r.callee.start,
                r.callee.end,
                NodeKind::is_function,
            )
            .unwrap();
            expected.add(cs, f, Provenance::Static);
        }
        assert_eq!(report.edges, expected);
        assert_eq!(
            report.edges.len(),
            p.edges.len(),
            "one call site per synthetic call"
        );
    }
}

#[test]
fn nested_calls_resolve_to_the_innermost_site() {
    let src = "function f(x) { return x; }\nf(f(1));\n";
    let g = build(&[("a.js", src)]);
    let inner = src.rfind("f(1)").unwrap();
    let rec = |s: usize, e: usize| {
        format!(
            "{{\"caller\":{{\"file\":\"a.js\",\"start\":{s},\"end\":{e}}},\"callee\":{{\"file\":\"a.js\",\"start\":9,\"end\":10}},\"provenance\":\"static\",\"count\":1}}\n"
        )
    };
    let report =
        ingest_edge_text(&(rec(inner, inner + 1) + &rec(inner - 2, inner - 1)), &g).unwrap();
    let sites: Vec<NodeId> = report.edges.pairs().map(|(c, _)| c).collect();
    let inner_call = find_node(&g, &[("a.js", src)], NodeKind::CallExpression, "f(1)");
    let outer_call = find_node(&g, &[("a.js", src)], NodeKind::CallExpression, "f(f(1))");
    assert_eq!(
        sites,
        vec![outer_call, inner_call]
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect::<Vec<_>>()
    );
}

#[test]
fn malformed_and_unresolved_lines_are_reported_by_line_number() {
    let src = "function f() {}\nf();\nf();\nf();\n";
    let g = build(&[("a.js", src)]);
    let (sites, defs) = enumerate_endpoints(&g);
    let mut good = CallEdgeSet::new();
    for &s in &sites {
        good.add(s, defs[0], Provenance::Static);
    }
    let mut text = edge_file_text(&g, &good).unwrap();
    text.push_str("not json\n");
    text.push_str("{\"caller\":{\"file\":\"zzz.js\",\"start\":0,\"end\":1},\"callee\":{\"file\":\"a.js\",\"start\":0,\"end\":15},\"provenance\":\"static\",\"count\":1}\n");
    let report = ingest_edge_text(&text, &g).unwrap();
    assert_eq!(report.edges, good);
    assert_eq!(report.unresolved, 1);
    let lines: Vec<usize> = report.diagnostics.iter().map(|d| d.line).collect();
    assert_eq!(lines, vec![4, 5]);
}

#[test]
fn mostly_unresolvable_input_is_an_error() {
    let g = build(&[("a.js", "function f() {}\nf();\n")]);
    let other = build(&[("b.js", "function g() {}\ng();\n")]);
    let (s, d) = enumerate_endpoints(&other);
    let mut foreign = CallEdgeSet::new();
    foreign.add(s[0], d[0], Provenance::Static);
    let text = edge_file_text(&other, &foreign).unwrap();
    assert!(ingest_edge_text(&text, &g).is_err());
}

#[test]
fn edge_files_round_trip_with_provenance_and_counts() {
    let src = "function f() {}\nfunction g() {}\nf();\ng();\nf();\n";
    let g = build(&[("a.js", src)]);
    let (sites, defs) = enumerate_endpoints(&g);
    let mut set = CallEdgeSet::new();
    set.add(sites[0], defs[0], Provenance::Static);
    set.add(sites[0], defs[0], Provenance::Dynamic);
    set.add(sites[0], defs[0], Provenance::Dynamic);
    set.add(sites[1], defs[1], Provenance::Analyst);
    set.add(sites[2], defs[0], Provenance::Dynamic);
    let meta = FileMeta {
        tool_version: "test".into(),
        seed: 3,
        input_digests: BTreeMap::from([("graph".to_string(), "00".to_string())]),
    };
    let text = edge_file_text_with_meta(&g, &set, &meta).unwrap();
    assert_eq!(
        FileMeta::from_header(text.lines().next().unwrap()),
        Some(meta)
    );
    let back = ingest_edge_text(&text, &g).unwrap();
    assert!(back.diagnostics.is_empty());
    assert_eq!(back.edges, set);
    assert_eq!(back.edges.get(sites[0], defs[0]).unwrap().count, 2);
}

#[test]
fn merging_unions_provenance_and_sums_counts() {
    let g = build(&[("a.js", "function f() {}\nf();\nf();\n")]);
    let (s, d) = enumerate_endpoints(&g);
    let mut a = CallEdgeSet::new();
    a.add(s[0], d[0], Provenance::Static);
    let mut b = CallEdgeSet::new();
    b.add(s[0], d[0], Provenance::Dynamic);
    b.add(s[0], d[0], Provenance::Dynamic);
    b.add(s[1], d[0], Provenance::Dynamic);
    let m = merge_edge_sets(&g, &[&a, &b]).unwrap();
    assert_eq!(m.len(), 2);
    let e = m.get(s[0], d[0]).unwrap();
    assert!(
        e.provenance.contains(Provenance::Static) && e.provenance.contains(Provenance::Dynamic)
    );
    assert_eq!(e.count, 2);
    assert_eq!(
        merge_edge_sets(&g, &[&b, &a]).unwrap(),
        m,
        "order does not matter"
    );

    let mut bad = CallEdgeSet::new();
    bad.add(d[0], s[0], Provenance::Static);
    assert!(
        merge_edge_sets(&g, &[&bad]).is_err(),
        "endpoints must be a call site and a function"
    );
}

// ---------------------------------------------------------------------------
// Built-in resolver

fn resolved(src: &str) -> BTreeSet<(String, String)> {
    let g = build(&[("a.js", src)]);
    heuristic_static_resolve(&g)
        .pairs()
        .map(|(c, f)| {
            let (c, f) = (g.node(c).unwrap(), g.node(f).unwrap());
            (
                src[c.start..c.end].to_string(),
                src[f.start..f.end]
                    .split('{')
                    .next()
                    .unwrap()
                    .trim()
                    .to_string(),
            )
        })
        .collect()
}

fn set(pairs: &[(&str, &str)]) -> BTreeSet<(String, String)> {
    pairs
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

#[test]
fn resolver_handles_declarations_function_variables_and_object_methods() {
    let src = "function f(a) {}\nvar g = function () {};\nvar h = () => 1;\nvar o = { m: function () {} };\nf(1);\ng();\nh();\no.m();\n";
    assert_eq!(
        resolved(src),
        set(&[
            ("f(1)", "function f(a)"),
            ("g()", "function ()"),
            ("h()", "() => 1"),
            ("o.m()", "function ()")
        ])
    );
}

#[test]
fn resolver_refuses_to_guess() {
    // Reassigned, declared twice, out of scope, unknown, computed.
    let src = "var r = function () {};\nr = other;\nr();\n\
               function d() {}\nfunction d() {}\nd();\n\
               function outer() { function inner() {} }\ninner();\n\
               missing();\n\
               var o = { m: function () {} };\no.m = x;\no.m();\no['m']();\n";
    assert_eq!(resolved(src), BTreeSet::new());
}

#[test]
fn resolver_never_crosses_files() {
    let g = build(&[("a.js", "function f() {}\n"), ("b.js", "f();\n")]);
    assert!(heuristic_static_resolve(&g).is_empty());
}

// ---------------------------------------------------------------------------
// Negatives

#[test]
fn negatives_are_distinct_non_positive_and_seeded() {
    let (g, positives) = common::synthetic(&CorpusConfig {
        functions: 20,
        files: 2,
        ..CorpusConfig::default()
    });
    let n = 150;
    let a = sample_negatives(&g, &positives, n, 1).unwrap();
    assert_eq!(a.len(), n);
    assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), n);
    assert!(a.iter().all(|&(c, f)| !positives.contains(c, f)));
    let (sites, defs) = enumerate_endpoints(&g);
    assert!(a.iter().all(|(c, f)| sites.contains(c) && defs.contains(f)));
    assert_eq!(sample_negatives(&g, &positives, n, 1).unwrap(), a);
    assert_ne!(sample_negatives(&g, &positives, n, 2).unwrap(), a);

    let all = sites.len() * defs.len() - positives.len();
    assert_eq!(
        sample_negatives(&g, &positives, all, 3).unwrap().len(),
        all,
        "dense regime"
    );
    assert!(sample_negatives(&g, &positives, all + 1, 3).is_err());
}

#[test]
fn negatives_are_uniform_over_the_available_pairs() {
    let g = build(&[(
        "a.js",
        "function f() {}\nfunction g() {}\nfunction h() {}\nf();\ng();\nh();\nf();\n",
    )]);
    let (sites, defs) = enumerate_endpoints(&g);
    let mut positives = CallEdgeSet::new();
    positives.add(sites[0], defs[0], Provenance::Static);
    positives.add(sites[1], defs[1], Provenance::Static);
    let available = sites.len() * defs.len() - 2;
    let draws = 4000;
    let mut counts: HashMap<(NodeId, NodeId), usize> = HashMap::new();
    for seed in 0..draws {
        for p in sample_negatives(&g, &positives, 1, seed as u64).unwrap() {
            *counts.entry(p).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), available);
    // Pearson chi-square against the uniform distribution; 9 degrees of
    // freedom, critical value 27.9 at p = 0.001.
    let expect = draws as f64 / available as f64;
    let chi2: f64 = counts
        .values()
        .map(|&c| (c as f64 - expect).powi(2) / expect)
        .sum();
    assert_eq!(available - 1, 9);
    assert!(chi2 < 27.9, "chi-square {chi2:.1}");
}

#[test]
fn span_refs_name_files_and_offsets() {
    let g = build(&[("dir/x.js", "function f() {}\n")]);
    let (_, d) = enumerate_endpoints(&g);
    let s = SpanRef::of(&g, d[0]).unwrap();
    assert_eq!(s.key(), "dir/x.js:0:15");
    assert!(SpanRef::of(&g, g.root).is_none());
}
