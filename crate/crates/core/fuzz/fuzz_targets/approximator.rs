#![no_main]

use libfuzzer_sys::fuzz_target;
use sparse_ndp::ndp::{decode_approximator, encode_approximator};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(approx) = decode_approximator(text) {
            assert!(approx.weights.iter().flatten().all(|w| w.is_finite()));
            assert_eq!(decode_approximator(&encode_approximator(&approx)).ok().as_ref(), Some(&approx));
        }
    }
});
