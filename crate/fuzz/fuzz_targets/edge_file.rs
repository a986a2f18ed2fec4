#![no_main]

use std::sync::OnceLock;

use callsight::ProgramGraph;
use libfuzzer_sys::fuzz_target;

const SOURCE: &str = "function f(a) { return a; }\nvar g = function () { f(1); };\nf(g());\n";

fn graph() -> &'static ProgramGraph {
    static GRAPH: OnceLock<ProgramGraph> = OnceLock::new();
    GRAPH.get_or_init(|| {
        let (g, _) =
            callsight::graph::graph_from_sources(&[("a.js".to_string(), SOURCE.to_string())]);
        callsight::link_identifiers(
            &callsight::prune(&g, &callsight::default_prune_kinds()).unwrap(),
        )
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = callsight::truth::ingest_edge_text(text, graph()) {
        let written = callsight::truth::edge_file_text(graph(), &report.edges).unwrap();
        let back = callsight::truth::ingest_edge_text(&written, graph()).unwrap();
        assert_eq!(back.edges, report.edges);
    }
    if let Some(line) = text.lines().next() {
        let _ = callsight::FileMeta::from_header(line);
    }
});
