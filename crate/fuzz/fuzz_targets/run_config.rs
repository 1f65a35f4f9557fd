#![no_main]
use libfuzzer_sys::fuzz_target;
use toeplitz_qrng::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text, None) {
        for ch in &cfg.channels {
            assert!(ch.config.override_unsafe || !ch.config.exceeds_bound());
            assert_eq!(ch.config.source.word_width().ok(), Some(ch.config.toeplitz.k()));
        }
    }
});
