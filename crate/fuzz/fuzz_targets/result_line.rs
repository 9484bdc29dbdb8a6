//! Fuzz the result-store line parser (JSON lines) and, on success, the
//! serialization round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ocal::harness::parse_result_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(record) = parse_result_line(text) {
            // overflowing numbers parse to infinities, which JSON cannot
            // represent again; round-trip only finite records
            let finite = record
                .metrics
                .values()
                .all(|v| v.map_or(true, f64::is_finite))
                && record.timing_ms.map_or(true, f64::is_finite);
            if finite {
                let rewritten = serde_json::to_string(&record).unwrap();
                let reparsed = parse_result_line(&rewritten).unwrap();
                assert_eq!(record, reparsed);
            }
        }
    }
});
