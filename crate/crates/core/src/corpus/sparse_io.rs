//! Line-oriented text formats for prepared corpora.
//!
//! Sparse corpus:
//! ```text
//! mixhash-sparse v1 <num_docs> <vocab_size>
//! <id>\t<label>,<label>\t<idx>:<val> <idx>:<val> ...
//! ```
//! Vocabulary: one `<term>\t<index>\t<df>` line per term.
//! Split manifest: one `<id>\t<split>` line per document.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use super::{CorpusError, SparseVector, Split, Vocabulary};

pub const SPARSE_MAGIC: &str = "mixhash-sparse";
pub const SPARSE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRecord {
    pub id: String,
    pub labels: BTreeSet<String>,
    pub vector: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCorpus {
    pub vocab_size: usize,
    pub records: Vec<SparseRecord>,
}

fn parse_header(line: Option<&str>) -> Result<(usize, usize), CorpusError> {
    let line = line.ok_or_else(|| CorpusError::malformed(1, "missing header"))?;
    let parts: Vec<&str> = line.split_ascii_whitespace().collect();
    match parts.as_slice() {
        [magic, version, n, v] if *magic == SPARSE_MAGIC && *version == SPARSE_VERSION => {
            let n = n
                .parse()
                .map_err(|_| CorpusError::malformed(1, "document count is not an integer"))?;
            let v = v
                .parse()
                .map_err(|_| CorpusError::malformed(1, "vocabulary size is not an integer"))?;
            Ok((n, v))
        }
        _ => Err(CorpusError::malformed(
            1,
            format!("expected `{SPARSE_MAGIC} {SPARSE_VERSION} <num_docs> <vocab_size>`"),
        )),
    }
}

fn parse_labels(field: &str, line: usize) -> Result<BTreeSet<String>, CorpusError> {
    if field.is_empty() {
        return Ok(BTreeSet::new());
    }
    field
        .split(',')
        .map(|l| {
            if l.is_empty() {
                Err(CorpusError::malformed(line, "empty label"))
            } else {
                Ok(l.to_string())
            }
        })
        .collect()
}

fn parse_entries(field: &str, vocab_size: usize, line: usize) -> Result<SparseVector, CorpusError> {
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for item in field.split_ascii_whitespace() {
        let (i, v) = item
            .split_once(':')
            .ok_or_else(|| CorpusError::malformed(line, format!("entry `{item}` is not idx:val")))?;
        let i: u32 = i
            .parse()
            .map_err(|_| CorpusError::malformed(line, format!("bad index `{i}`")))?;
        let v: f32 = v
            .parse()
            .map_err(|_| CorpusError::malformed(line, format!("bad value `{v}`")))?;
        if i as usize >= vocab_size {
            return Err(CorpusError::malformed(
                line,
                format!("index {i} out of range for vocabulary of {vocab_size}"),
            ));
        }
        indices.push(i);
        values.push(v);
    }
    SparseVector::new(indices, values).map_err(|e| CorpusError::malformed(line, e.to_string()))
}

/// Parses the sparse corpus format, validating every index against the
/// declared vocabulary size.
pub fn parse_sparse(input: &str) -> Result<SparseCorpus, CorpusError> {
    let mut lines = input.lines();
    let (num_docs, vocab_size) = parse_header(lines.next())?;
    let mut records = Vec::with_capacity(num_docs.min(1 << 20));
    let mut seen = HashSet::new();
    for (i, raw) in lines.enumerate() {
        let line = i + 2;
        if raw.is_empty() {
            continue;
        }
        let mut fields = raw.splitn(3, '\t');
        let id = fields.next().unwrap_or_default();
        let (Some(labels), Some(entries)) = (fields.next(), fields.next()) else {
            return Err(CorpusError::malformed(line, "expected 3 tab-separated fields"));
        };
        if id.is_empty() {
            return Err(CorpusError::malformed(line, "empty document id"));
        }
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateId {
                id: id.to_string(),
                line,
            });
        }
        records.push(SparseRecord {
            id: id.to_string(),
            labels: parse_labels(labels, line)?,
            vector: parse_entries(entries, vocab_size, line)?,
        });
    }
    if records.len() != num_docs {
        return Err(CorpusError::Inconsistent(format!(
            "header declares {num_docs} documents, found {}",
            records.len()
        )));
    }
    Ok(SparseCorpus { vocab_size, records })
}

fn check_field(value: &str, what: &str, forbid_comma: bool) -> Result<(), CorpusError> {
    if value.is_empty() || value.contains(['\t', '\n', '\r']) || (forbid_comma && value.contains(',')) {
        return Err(CorpusError::InvalidArgument(format!(
            "{what} `{}` cannot be stored in a tab-separated file",
            value.escape_debug()
        )));
    }
    Ok(())
}

pub fn write_sparse<'a, W, I>(mut out: W, vocab_size: usize, num_docs: usize, records: I) -> Result<(), CorpusError>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a BTreeSet<String>, &'a SparseVector)>,
{
    let mut buf = format!("{SPARSE_MAGIC} {SPARSE_VERSION} {num_docs} {vocab_size}\n");
    let mut written = 0;
    for (id, labels, vector) in records {
        check_field(id, "document id", false)?;
        for l in labels {
            check_field(l, "label", true)?;
        }
        buf.push_str(id);
        buf.push('\t');
        buf.push_str(&labels.iter().map(String::as_str).collect::<Vec<_>>().join(","));
        buf.push('\t');
        let entries: Vec<String> = vector.iter().map(|(i, v)| format!("{i}:{v}")).collect();
        buf.push_str(&entries.join(" "));
        buf.push('\n');
        written += 1;
    }
    if written != num_docs {
        return Err(CorpusError::Inconsistent(format!(
            "declared {num_docs} documents but wrote {written}"
        )));
    }
    out.write_all(buf.as_bytes())
        .map_err(|e| CorpusError::io("<sparse output>", e))
}

pub fn parse_vocab_file(input: &str) -> Result<Vocabulary, CorpusError> {
    let mut entries: Vec<Option<(String, u32)>> = Vec::new();
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        if raw.is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split('\t').collect();
        let [term, index, df] = parts.as_slice() else {
            return Err(CorpusError::malformed(line, "expected term<TAB>index<TAB>df"));
        };
        let index: usize = index
            .parse()
            .map_err(|_| CorpusError::malformed(line, "bad index"))?;
        let df: u32 = df.parse().map_err(|_| CorpusError::malformed(line, "bad df"))?;
        if term.is_empty() {
            return Err(CorpusError::malformed(line, "empty term"));
        }
        // Indices must be dense, so any index beyond the line count is invalid.
        if index > input.len() {
            return Err(CorpusError::malformed(line, "index out of range"));
        }
        if entries.len() <= index {
            entries.resize(index + 1, None);
        }
        if entries[index].replace((term.to_string(), df)).is_some() {
            return Err(CorpusError::malformed(line, format!("index {index} assigned twice")));
        }
    }
    let entries = entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| e.ok_or_else(|| CorpusError::Inconsistent(format!("vocabulary index {i} missing"))))
        .collect::<Result<Vec<_>, _>>()?;
    Vocabulary::from_entries(entries)
}

pub fn write_vocab_file<W: Write>(mut out: W, vocab: &Vocabulary) -> Result<(), CorpusError> {
    let mut buf = String::new();
    for (i, term, df) in vocab.iter() {
        check_field(term, "term", false)?;
        buf.push_str(&format!("{term}\t{i}\t{df}\n"));
    }
    out.write_all(buf.as_bytes())
        .map_err(|e| CorpusError::io("<vocab output>", e))
}

pub fn parse_split_manifest(input: &str) -> Result<HashMap<String, Split>, CorpusError> {
    let mut out = HashMap::new();
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        if raw.is_empty() {
            continue;
        }
        let (id, split) = raw
            .split_once('\t')
            .ok_or_else(|| CorpusError::malformed(line, "expected id<TAB>split"))?;
        let split: Split = split
            .parse()
            .map_err(|e: CorpusError| CorpusError::malformed(line, e.to_string()))?;
        if out.insert(id.to_string(), split).is_some() {
            return Err(CorpusError::DuplicateId {
                id: id.to_string(),
                line,
            });
        }
    }
    Ok(out)
}

pub fn write_split_manifest<'a, W, I>(mut out: W, entries: I) -> Result<(), CorpusError>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, Split)>,
{
    let mut buf = String::new();
    for (id, split) in entries {
        check_field(id, "document id", false)?;
        buf.push_str(&format!("{id}\t{split}\n"));
    }
    out.write_all(buf.as_bytes())
        .map_err(|e| CorpusError::io("<split output>", e))
}
