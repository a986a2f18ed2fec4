#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(graph) = callsight::ProgramGraph::from_json(text) {
        let again = callsight::ProgramGraph::from_json(&graph.to_json()).unwrap();
        assert_eq!(again.to_json(), graph.to_json());
        let _ = callsight::prune(&graph, &callsight::default_prune_kinds());
        let _ = callsight::compute_features(&graph);
    }
});
