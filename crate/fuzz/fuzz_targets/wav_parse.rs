#![no_main]

use libfuzzer_sys::fuzz_target;
use loae::frontend::{compute_log_mel, parse_wav, patchify, FrontendConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = parse_wav(data) {
        assert!(w.samples().iter().all(|s| s.is_finite()));
        if w.sample_rate() == 16_000 && w.samples().len() <= 64_000 {
            if let Ok(m) = compute_log_mel(&w, &FrontendConfig::default()) {
                let _ = patchify(&m);
            }
        }
    }
});
