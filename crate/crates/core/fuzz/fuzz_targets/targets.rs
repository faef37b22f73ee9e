#![no_main]

use libfuzzer_sys::fuzz_target;
use sparse_ndp::image::parse_targets;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(entries) = parse_targets(text) {
            assert!(entries.iter().all(|(k, _)| *k >= 1));
        }
    }
});
