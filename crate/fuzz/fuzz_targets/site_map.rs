#![no_main]

use callsight::instrument::SiteMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(map) = SiteMap::from_json(text) {
        assert_eq!(SiteMap::from_json(&map.to_json()).unwrap(), map);
        let _ = map.by_start();
    }
    let _ = SiteMap::parse_key(text);
});
