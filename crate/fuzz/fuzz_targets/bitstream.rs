#![no_main]
use libfuzzer_sys::fuzz_target;
use toeplitz_qrng::BitString;

// First byte picks how many trailing bits of the last byte to keep.
fuzz_target!(|data: &[u8]| {
    let Some((&cut, body)) = data.split_first() else {
        return;
    };
    let len = (body.len() * 8).saturating_sub(cut as usize % 8);
    let bits = BitString::from_bytes(body, len).unwrap();
    assert_eq!(bits.len(), len);
    let bytes = bits.to_bytes();
    assert_eq!(BitString::from_bytes(&bytes, len).unwrap(), bits);
    assert_eq!(bits.reversed().reversed(), bits);
    assert_eq!(bits.count_ones() + bits.complement().count_ones(), len);
});
