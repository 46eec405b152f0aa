#![no_main]

use libfuzzer_sys::fuzz_target;
use mixhash::corpus::{parse_split_manifest, write_split_manifest};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(map) = parse_split_manifest(text) else { return };
    let mut buf = Vec::new();
    if write_split_manifest(&mut buf, map.iter().map(|(id, s)| (id.as_str(), *s))).is_ok() {
        let again = parse_split_manifest(std::str::from_utf8(&buf).unwrap()).expect("written manifest parses");
        assert_eq!(again, map);
    }
});
