#![no_main]

use libfuzzer_sys::fuzz_target;
use mixhash::corpus::{parse_vocab_file, write_vocab_file};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(vocab) = parse_vocab_file(text) else { return };
    let mut buf = Vec::new();
    if write_vocab_file(&mut buf, &vocab).is_ok() {
        let again = parse_vocab_file(std::str::from_utf8(&buf).unwrap()).expect("written vocabulary parses");
        assert_eq!(again, vocab);
    }
});
