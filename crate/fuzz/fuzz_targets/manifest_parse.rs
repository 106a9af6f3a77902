#![no_main]

use libfuzzer_sys::fuzz_target;
use loae::data::parse_manifest_str;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(entries) = parse_manifest_str(text) {
            for e in entries {
                assert!(!e.id.is_empty());
                assert!((1..=5).contains(&e.captions.len()));
            }
        }
    }
});
