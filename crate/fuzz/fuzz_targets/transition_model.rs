#![no_main]

use chillplan_core::regimes::TransitionModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = TransitionModel::from_json(text) {
        for (_, m) in model.buckets() {
            assert!(m.max_row_error() <= 1e-9);
        }
        let _ = model.sample_path(0, 0, 48, 1);
    }
});
