//! Fuzz the CSV dataset loader: arbitrary bytes must produce either a
//! valid dataset or a clean error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ocal::data::{load_csv_reader, CsvSchema};

fuzz_target!(|data: &[u8]| {
    if let Ok(dataset) = load_csv_reader(data, "fuzz", &CsvSchema::default()) {
        // loader invariants on accepted input
        assert!(dataset.n() >= 1 && dataset.m() >= 1);
        for i in 0..dataset.n() {
            for v in dataset.x.row(i) {
                assert!((0.0..=1.0).contains(v), "column not normalized");
            }
        }
    }
});
