#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use sparse_ndp::config::parse_task_file;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(task) = parse_task_file(text, Path::new("base")) {
            assert!(!task.frames.is_empty() && task.a > 0);
        }
    }
});
