#![no_main]

use callsight::model::checkpoint::decode_tensors;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = decode_tensors(data) {
        for t in &raw {
            assert_eq!(t.data.len(), t.shape.iter().product::<usize>());
        }
    }
});
