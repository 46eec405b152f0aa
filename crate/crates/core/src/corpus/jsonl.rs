use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use super::{CorpusError, Document};

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_record(obj: &Map<String, Value>, line: usize) -> Result<Document, CorpusError> {
    let id = obj
        .get("id")
        .and_then(scalar_string)
        .ok_or_else(|| CorpusError::malformed(line, "missing string field `id`"))?;

    let tokens = match (obj.get("tokens"), obj.get("text")) {
        (Some(Value::Array(items)), _) => items
            .iter()
            .map(|t| match t {
                Value::String(s) => Ok(s.to_lowercase()),
                _ => Err(CorpusError::malformed(line, "`tokens` must be a list of strings")),
            })
            .collect::<Result<Vec<_>, _>>()?,
        (Some(_), _) => return Err(CorpusError::malformed(line, "`tokens` must be a list")),
        (None, Some(Value::String(text))) => tokenize(text),
        (None, Some(_)) => return Err(CorpusError::malformed(line, "`text` must be a string")),
        (None, None) => return Err(CorpusError::malformed(line, "record needs `text` or `tokens`")),
    };

    let labels = match obj.get("labels") {
        None | Some(Value::Null) => BTreeSet::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|l| {
                scalar_string(l)
                    .ok_or_else(|| CorpusError::malformed(line, "labels must be strings or numbers"))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(CorpusError::malformed(line, "`labels` must be a list")),
    };

    Ok(Document { id, tokens, labels })
}

/// Parses JSON-lines text into documents. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn parse_jsonl(input: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(raw).map_err(|e| CorpusError::malformed(line, e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(CorpusError::malformed(line, "expected a JSON object"));
        };
        let doc = parse_record(&obj, line)?;
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId { id: doc.id, line });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_jsonl(&text)
}

/// Writes documents as `{"id", "text", "labels"}` records, text being the
/// space-joined tokens.
pub fn write_jsonl<W: Write>(docs: &[Document], mut out: W) -> std::io::Result<()> {
    for d in docs {
        let record = serde_json::json!({
            "id": d.id,
            "text": d.tokens.join(" "),
            "labels": d.labels.iter().collect::<Vec<_>>(),
        });
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Cats and cats."), vec!["cats", "and", "cats"]);
        assert_eq!(tokenize("  --x1,Y2;;z "), vec!["x1", "y2", "z"]);
        assert!(tokenize("...").is_empty());
    }

    #[test]
    fn parses_text_record() {
        let docs = parse_jsonl(r#"{"id":"a","text":"Cats and cats.","labels":["pets"]}"#).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].tokens, vec!["cats", "and", "cats"]);
        assert_eq!(docs[0].labels, BTreeSet::from(["pets".to_string()]));
    }

    #[test]
    fn empty_labels_and_token_lists() {
        let docs = parse_jsonl(
            "{\"id\":\"a\",\"text\":\"x\",\"labels\":[]}\n\n{\"id\":7,\"tokens\":[\"Q\",\"r\"]}\n",
        )
        .unwrap();
        assert!(docs[0].labels.is_empty());
        assert_eq!(docs[1].id, "7");
        assert_eq!(docs[1].tokens, vec!["q", "r"]);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_line_is_numbered() {
        let err = parse_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{not json").unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }), "{err}");
        let err = parse_jsonl("{\"id\":\"a\"}").unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
        let err = parse_jsonl("[1,2]").unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
    }

    #[test]
    fn write_then_parse_preserves_documents() {
        let docs = parse_jsonl(
            "{\"id\":\"a\",\"text\":\"one two\",\"labels\":[\"x\",\"y\"]}\n{\"id\":\"b\",\"text\":\"three\"}",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_jsonl(&docs, &mut buf).unwrap();
        assert_eq!(parse_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap(), docs);
    }
}
