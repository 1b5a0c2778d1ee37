#![no_main]

use heatbie::dump::{decode_binary, encode_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(op) = decode_binary(data) {
        assert_eq!(encode_binary(&op), data);
    }
});
