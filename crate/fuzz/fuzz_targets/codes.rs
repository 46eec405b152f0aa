#![no_main]

use libfuzzer_sys::fuzz_target;
use mixhash::hashing::{parse_codes, write_codes};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(codes) = parse_codes(text) else { return };
    let mut buf = Vec::new();
    write_codes(&mut buf, &codes).unwrap();
    assert_eq!(parse_codes(std::str::from_utf8(&buf).unwrap()).expect("written codes parse"), codes);
});
