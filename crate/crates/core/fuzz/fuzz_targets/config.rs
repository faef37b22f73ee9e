#![no_main]

use libfuzzer_sys::fuzz_target;
use sparse_ndp::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_text(text) {
            assert_eq!(cfg.region % cfg.patch, 0);
        }
    }
});
