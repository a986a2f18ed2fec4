#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if callsight_js::parse(src).is_ok() {
        // Whatever parses must also build a graph and instrument cleanly.
        let files = [("f.js".to_string(), src.to_string())];
        let (graph, diags) = callsight::graph::graph_from_sources(&files);
        assert!(diags.is_empty());
        graph.validate().unwrap();
        let out = callsight::instrument::instrument_source("f.js", src).unwrap();
        callsight_js::parse(&out.text).unwrap();
    }
});
