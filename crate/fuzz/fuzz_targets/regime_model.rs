#![no_main]

use chillplan_core::qfr::RegimeModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = RegimeModel::from_json(text) {
        let levels = model.levels(0);
        assert_eq!(levels.boundaries.len() + 1, model.regimes);
        let _ = model.classify(12345, 42.0);
    }
});
