#![no_main]

use std::sync::OnceLock;

use callsight::instrument::{trace_lines, SiteMap};
use callsight::ProgramGraph;
use libfuzzer_sys::fuzz_target;

const SOURCE: &str =
    "function f(a) { return a; }\nvar g = function () { f(1); };\nf(g());\n[1].map(f);\n";

fn fixture() -> &'static (ProgramGraph, SiteMap) {
    static FIXTURE: OnceLock<(ProgramGraph, SiteMap)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let (g, _) =
            callsight::graph::graph_from_sources(&[("a.js".to_string(), SOURCE.to_string())]);
        let g = callsight::link_identifiers(
            &callsight::prune(&g, &callsight::default_prune_kinds()).unwrap(),
        );
        let map = SiteMap::from_graph(&g);
        (g, map)
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (graph, map) = fixture();
    let lines = text.lines().map(|l| Ok(l.to_string()));
    let report = trace_lines(lines, map, graph, |f| {
        (f == "a.js").then(|| SOURCE.to_string())
    })
    .unwrap();
    assert!(report.edges.len() <= report.events);
});
