#![no_main]
use libfuzzer_sys::fuzz_target;
use toeplitz_qrng::source::{read_raw_samples, write_raw_samples};

fuzz_target!(|data: &[u8]| {
    match read_raw_samples(data) {
        Ok(codes) => assert_eq!(write_raw_samples(&codes), data),
        Err(_) => assert!(data.len() % 2 == 1),
    }
});
