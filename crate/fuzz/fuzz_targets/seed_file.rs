#![no_main]
use libfuzzer_sys::fuzz_target;
use toeplitz_qrng::{SecuritySpec, SeedBank, SeedFile, SelectorSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(file) = SeedFile::parse(data) else {
        return;
    };
    // accepted files re-encode to the same bytes
    assert_eq!(file.to_bytes(), data);
    // small banks are cheap enough to build in full
    let table_bits = file.b() as u128 * file.cfg.steps() as u128 * file.cfg.subseed_len() as u128;
    if table_bits <= 1 << 22 {
        let _ = SeedBank::from_seed_file(&file, SecuritySpec::default(), SelectorSpec::default());
    }
});
