#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((decisions, _torn)) = callsight_triage::parse_log(text) {
        let folded = callsight_triage::fold(&decisions);
        assert!(folded.len() <= decisions.len());
        let _ = callsight_triage::log::accepted_edges(&decisions);
    }
});
