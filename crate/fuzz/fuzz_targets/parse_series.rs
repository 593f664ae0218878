#![no_main]

use chillplan_core::ingest::{parse_series, SeriesKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for kind in [
        SeriesKind::Price,
        SeriesKind::Temperature,
        SeriesKind::Workload,
    ] {
        if let Ok(series) = parse_series(text, kind) {
            // Whatever parses must survive its own serialization.
            let again = parse_series(&series.to_csv_string(), kind).expect("round trip");
            assert_eq!(again, series);
        }
    }
});
