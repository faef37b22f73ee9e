#![no_main]

use libfuzzer_sys::fuzz_target;
use sparse_ndp::image::{decode_pgm, encode_pgm};

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = decode_pgm(data) {
        assert!(frame.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        let again = decode_pgm(&encode_pgm(&frame)).expect("re-encoded frame decodes");
        assert_eq!((again.width(), again.height()), (frame.width(), frame.height()));
    }
});
