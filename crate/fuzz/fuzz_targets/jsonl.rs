#![no_main]

use libfuzzer_sys::fuzz_target;
use mixhash::corpus::{parse_jsonl, write_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(docs) = parse_jsonl(text) else { return };
    let mut buf = Vec::new();
    write_jsonl(&docs, &mut buf).unwrap();
    let again = parse_jsonl(std::str::from_utf8(&buf).unwrap()).expect("written JSONL parses");
    assert_eq!(again.len(), docs.len());
    for (a, b) in again.iter().zip(&docs) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.labels, b.labels);
    }
});
