#![no_main]

use libfuzzer_sys::fuzz_target;
use mixhash::hashing::{parse_thresholds, write_thresholds};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(t) = parse_thresholds(text) else { return };
    let mut buf = Vec::new();
    write_thresholds(&mut buf, &t).unwrap();
    assert_eq!(parse_thresholds(std::str::from_utf8(&buf).unwrap()).expect("written thresholds parse"), t);
});
