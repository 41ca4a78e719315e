#![no_main]

use libfuzzer_sys::fuzz_target;
use mera_core::pipeline::{decode_embedding, encode_embedding};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_embedding(data) {
        let again = encode_embedding(&m).expect("decoded matrix re-encodes");
        assert_eq!(decode_embedding(&again).expect("round trip"), m);
    }
});
