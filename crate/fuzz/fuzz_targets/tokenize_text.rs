#![no_main]

use libfuzzer_sys::fuzz_target;
use loae::decoder::{normalize_tokens, Vocabulary};
use loae::metrics::metric_tokenize;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = metric_tokenize(text);
    let toks = normalize_tokens(text);
    if let Ok(v) = Vocabulary::build([text]) {
        let ids = v.tokenize(text);
        assert_eq!(ids.len(), toks.len());
        let _ = v.detokenize(&ids);
    }
});
