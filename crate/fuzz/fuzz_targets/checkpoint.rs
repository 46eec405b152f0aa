#![no_main]

use libfuzzer_sys::fuzz_target;
use mixhash::models::{parse_checkpoint, write_checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(params) = parse_checkpoint(data) else { return };
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &params).unwrap();
    assert_eq!(parse_checkpoint(&buf).expect("written checkpoint parses"), params);
});
