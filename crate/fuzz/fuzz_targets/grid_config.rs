//! Fuzz the grid config parser (TOML): arbitrary text must parse or fail
//! cleanly.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ocal::config::parse_grid;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_grid(text);
    }
});
