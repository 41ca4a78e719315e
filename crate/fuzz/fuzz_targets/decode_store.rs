#![no_main]

use libfuzzer_sys::fuzz_target;
use mera_core::store::{decode_store, encode_store};

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = decode_store(data) {
        let again = encode_store(&store).expect("decoded store re-encodes");
        decode_store(&again).expect("round trip");
    }
});
