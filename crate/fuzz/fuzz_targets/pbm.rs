#![no_main]
use libfuzzer_sys::fuzz_target;
use toeplitz_qrng::analysis::{bitmap_render, parse_pbm, PbmFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(img) = parse_pbm(data) else {
        return;
    };
    assert_eq!(img.pixels.len(), img.width * img.height);
    if img.pixels.is_empty() {
        return;
    }
    for format in [PbmFormat::Plain, PbmFormat::Raw] {
        let again = bitmap_render(&img.pixels, img.width, img.height, format).unwrap();
        assert_eq!(parse_pbm(&again).unwrap(), img);
    }
});
