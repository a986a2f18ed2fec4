#![no_main]

use std::sync::OnceLock;

use callsight::model::checkpoint::{encode_tensors, Checkpoint};
use callsight::model::{init_model, Hyperparams};
use libfuzzer_sys::fuzz_target;

/// A valid blob for the sidecar under test to describe (or not).
fn blob() -> &'static Vec<u8> {
    static BLOB: OnceLock<Vec<u8>> = OnceLock::new();
    BLOB.get_or_init(|| {
        let hp = Hyperparams {
            layers: 1,
            hidden_dim: 2,
            name_buckets: 4,
            ..Hyperparams::default()
        };
        encode_tensors(&init_model(&hp).unwrap().tensors)
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(meta) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ckpt) = Checkpoint::from_parts(blob(), meta) {
        assert!(ckpt.params.tensors.all_finite());
    }
});
