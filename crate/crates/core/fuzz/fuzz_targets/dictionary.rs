#![no_main]

use libfuzzer_sys::fuzz_target;
use sparse_ndp::gabor::{decode_dictionary, encode_dictionary};

fuzz_target!(|data: &[u8]| {
    if let Ok(dict) = decode_dictionary(data) {
        assert_eq!(dict.matrix.ncols(), dict.m());
        let again = decode_dictionary(&encode_dictionary(&dict)).expect("re-encoded dictionary decodes");
        assert_eq!(again.m(), dict.m());
    }
});
