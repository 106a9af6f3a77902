#![no_main]

use libfuzzer_sys::fuzz_target;
use loae::fluency::RuleDetector;
use loae::metrics::{evaluate_corpus, join_items, parse_candidates, parse_references, parse_spice, MetricsConfig};

// Input: candidates, references and SPICE sidecar separated by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.splitn(3, '\0');
    let (c, r, s) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""), parts.next());
    let spice = s.map(parse_spice);
    let (Ok(c), Ok(r)) = (parse_candidates(c), parse_references(r)) else { return };
    let Ok(items) = join_items(&c, &r) else { return };
    let spice = match spice {
        Some(Ok(s)) => Some(s),
        Some(Err(_)) => return,
        None => None,
    };
    if let Ok(report) = evaluate_corpus(&items, &RuleDetector::default(), spice.as_ref(), &MetricsConfig::default()) {
        assert_eq!(report.items.len(), items.len());
    }
});
