#![no_main]

use libfuzzer_sys::fuzz_target;
use mixhash::corpus::{parse_sparse, write_sparse};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(corpus) = parse_sparse(text) else { return };
    let mut buf = Vec::new();
    let records = corpus.records.iter().map(|r| (r.id.as_str(), &r.labels, &r.vector));
    if write_sparse(&mut buf, corpus.vocab_size, corpus.records.len(), records).is_ok() {
        let again = parse_sparse(std::str::from_utf8(&buf).unwrap()).expect("written file parses");
        assert_eq!(again, corpus);
    }
});
