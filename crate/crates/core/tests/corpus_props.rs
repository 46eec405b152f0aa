mod common;

use std::collections::BTreeSet;

use common::sparse_cosine;
use mixhash::corpus::{
    parse_jsonl, parse_sparse, parse_split_manifest, parse_vocab_file, prepare, synth_corpus, synth_documents,
    write_jsonl, Document, PrepareOptions, SynthConfig,
};
use mixhash::hashing::{parse_codes, parse_thresholds};
use mixhash::models::parse_checkpoint;
use proptest::prelude::*;

fn small_synth() -> SynthConfig {
    SynthConfig {
        num_clusters: 4,
        docs_per_cluster: 50,
        vocab_size: 200,
        doc_length: 60,
        seed: 3,
    }
}

#[test]
fn synthetic_clusters_are_separable() {
    let ds = synth_corpus(&small_synth(), &PrepareOptions::default()).unwrap();
    let rows: Vec<Vec<(u32, f32)>> = ds.tfidf().iter().map(|v| v.iter().collect()).collect();
    let (mut within, mut across) = ((0.0, 0usize), (0.0, 0usize));
    for i in (0..ds.len()).step_by(3) {
        for j in (i + 1..ds.len()).step_by(7) {
            let c = sparse_cosine(&rows[i], &rows[j]);
            let acc = if ds.labels()[i] == ds.labels()[j] { &mut within } else { &mut across };
            acc.0 += c;
            acc.1 += 1;
        }
    }
    let (w, a) = (within.0 / within.1 as f64, across.0 / across.1 as f64);
    assert!(w > 2.0 * a, "within {w} across {a}");
}

#[test]
fn synthetic_generation_is_seeded() {
    let a = synth_documents(&small_synth()).unwrap();
    assert_eq!(a, synth_documents(&small_synth()).unwrap());
    let other = SynthConfig { seed: 4, ..small_synth() };
    assert_ne!(a, synth_documents(&other).unwrap());
    let bad = SynthConfig { vocab_size: 7, ..small_synth() };
    assert!(synth_documents(&bad).is_err());
}

fn document() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g"]), 1..12)
        .prop_map(|t| t.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prepared_tfidf_rows_are_unit_or_absent(docs in prop::collection::vec(document(), 4..30)) {
        let docs: Vec<Document> = docs
            .into_iter()
            .enumerate()
            .map(|(i, tokens)| Document { id: format!("d{i}"), tokens, labels: BTreeSet::new() })
            .collect();
        let n = docs.len() as u32;
        let opts = PrepareOptions { min_df: 1, ..PrepareOptions::default() };
        if let Ok(ds) = prepare(docs.into_iter().map(Document::into_counted).collect(), &opts) {
            for (t, c) in ds.tfidf().iter().zip(ds.counts()) {
                prop_assert!(!t.is_empty());
                prop_assert!((t.norm() - 1.0).abs() < 1e-5);
                // A term present in every document has zero IDF and no weight.
                for &i in c.indices() {
                    let weighted = t.indices().contains(&i);
                    prop_assert_eq!(weighted, ds.vocab().df(i) < n, "term {}", i);
                }
                prop_assert!(t.indices().iter().all(|i| c.indices().contains(i)));
            }
        }
    }

    #[test]
    fn jsonl_round_trip(docs in prop::collection::vec(document(), 0..6), label in "[a-z]{1,4}") {
        let docs: Vec<Document> = docs
            .into_iter()
            .enumerate()
            .map(|(i, tokens)| Document { id: format!("d{i}"), tokens, labels: BTreeSet::from([label.clone()]) })
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&docs, &mut buf).unwrap();
        prop_assert_eq!(parse_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap(), docs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn text_parsers_never_panic(s in "(?s).{0,300}") {
        let _ = parse_jsonl(&s);
        let _ = parse_sparse(&s);
        let _ = parse_vocab_file(&s);
        let _ = parse_split_manifest(&s);
        let _ = parse_codes(&s);
        let _ = parse_thresholds(&s);
    }

    #[test]
    fn structured_headers_never_panic(
        head in prop::sample::select(vec![
            "mixhash-codes v1 ", "mixhash-thresholds v1 ", "mixhash-sparse v1 ", "mixhash-ckpt v1\n",
        ]),
        tail in "[0-9a-f \t\n:{}\",]{0,120}",
    ) {
        let s = format!("{head}{tail}");
        let _ = parse_sparse(&s);
        let _ = parse_codes(&s);
        let _ = parse_thresholds(&s);
        let _ = parse_checkpoint(s.as_bytes());
    }

    #[test]
    fn checkpoint_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_checkpoint(&bytes);
        let mut framed = b"mixhash-ckpt v1\n".to_vec();
        framed.extend(&bytes);
        let _ = parse_checkpoint(&framed);
    }
}
