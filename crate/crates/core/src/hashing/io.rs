//! Text formats for codebooks and binarization thresholds.

use std::io::Write;

use super::codebook::words_for;
use super::{BinaryCodebook, HashError};

pub const CODES_MAGIC: &str = "mixhash-codes v1";
pub const THRESHOLDS_MAGIC: &str = "mixhash-thresholds v1";

/// Upper bound on the declared width accepted by the parsers.
const MAX_BITS: usize = 1 << 16;

fn header_fields(line: Option<&str>, magic: &str, count: usize) -> Result<Vec<usize>, HashError> {
    let line = line.ok_or_else(|| HashError::malformed(1, "missing header"))?;
    let rest = line
        .strip_prefix(magic)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| HashError::malformed(1, format!("expected `{magic} ...` header")))?;
    let fields: Vec<usize> = rest
        .split(' ')
        .map(|f| f.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| HashError::malformed(1, format!("bad header number: {e}")))?;
    if fields.len() != count {
        return Err(HashError::malformed(1, format!("header needs {count} numbers")));
    }
    Ok(fields)
}

pub fn write_codes(out: &mut impl Write, codes: &BinaryCodebook) -> std::io::Result<()> {
    writeln!(out, "{CODES_MAGIC} {} {}", codes.len(), codes.bits())?;
    for (id, code) in codes.iter() {
        write!(out, "{id}\t")?;
        for w in code.iter().rev() {
            write!(out, "{w:016x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn parse_codes(text: &str) -> Result<BinaryCodebook, HashError> {
    let mut lines = text.lines();
    let h = header_fields(lines.next(), CODES_MAGIC, 2)?;
    let (n, bits) = (h[0], h[1]);
    if bits == 0 || bits > MAX_BITS {
        return Err(HashError::malformed(1, format!("bit width {bits} out of range")));
    }
    let words = words_for(bits);
    let mut ids = Vec::new();
    let mut codes = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let (id, hex) = line
            .split_once('\t')
            .ok_or_else(|| HashError::malformed(ln, "expected `id<TAB>hex`"))?;
        if id.is_empty() {
            return Err(HashError::malformed(ln, "empty id"));
        }
        if hex.len() != words * 16 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(HashError::malformed(ln, format!("expected {} hex digits", words * 16)));
        }
        let start = codes.len();
        for chunk in hex.as_bytes().chunks(16).rev() {
            let s = std::str::from_utf8(chunk).expect("ascii hex");
            codes.push(u64::from_str_radix(s, 16).map_err(|e| HashError::malformed(ln, e.to_string()))?);
        }
        if codes[start..].len() != words {
            return Err(HashError::malformed(ln, "wrong word count"));
        }
        ids.push(id.to_string());
        if ids.len() > n {
            return Err(HashError::malformed(ln, format!("more than the {n} declared codes")));
        }
    }
    if ids.len() != n {
        return Err(HashError::malformed(ids.len() + 1, format!("declared {n} codes, found {}", ids.len())));
    }
    BinaryCodebook::new(bits, ids, codes)
}

pub fn write_thresholds(out: &mut impl Write, thresholds: &[f32]) -> std::io::Result<()> {
    writeln!(out, "{THRESHOLDS_MAGIC} {}", thresholds.len())?;
    for t in thresholds {
        writeln!(out, "{t}")?;
    }
    Ok(())
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f32>, HashError> {
    let mut lines = text.lines();
    let bits = header_fields(lines.next(), THRESHOLDS_MAGIC, 1)?[0];
    if bits == 0 || bits > MAX_BITS {
        return Err(HashError::malformed(1, format!("bit width {bits} out of range")));
    }
    let mut out = Vec::with_capacity(bits);
    for (i, line) in lines.enumerate() {
        let v: f32 = line
            .trim()
            .parse()
            .map_err(|e| HashError::malformed(i + 2, format!("bad threshold: {e}")))?;
        if !v.is_finite() {
            return Err(HashError::malformed(i + 2, "threshold must be finite"));
        }
        out.push(v);
        if out.len() > bits {
            return Err(HashError::malformed(i + 2, "more thresholds than bits"));
        }
    }
    if out.len() != bits {
        return Err(HashError::malformed(out.len() + 1, format!("expected {bits} thresholds")));
    }
    Ok(out)
}
