#![no_main]

use libfuzzer_sys::fuzz_target;
use loae::fluency::{correct_with_rules, detect_errors};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if text.len() > 4096 {
        return;
    }
    let _ = detect_errors(text);
    let once = correct_with_rules(text);
    assert_eq!(correct_with_rules(&once), once);
});
