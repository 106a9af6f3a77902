#![no_main]

use libfuzzer_sys::fuzz_target;
use loae::data::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok((model, opt)) = decode_checkpoint(data) {
        let again = encode_checkpoint(&model, opt.as_ref());
        assert!(decode_checkpoint(&again).is_ok());
    }
});
