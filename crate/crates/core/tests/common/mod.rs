#![allow(dead_code)]

use std::path::PathBuf;

use cmla::data::{annotate_opinions, parse_semeval_xml, EmbeddingTable, OovPolicy, OpinionLexicon, Sentence};
use cmla::tensor::init_uniform;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The two Dutch review sentences with aspect gold from XML and opinion gold
/// from the lexicon.
pub fn dutch_sentences() -> Vec<Sentence> {
    let corpus = parse_semeval_xml(fixture("dutch.xml")).expect("fixture parses");
    assert!(corpus.diagnostics.is_empty(), "{:?}", corpus.diagnostics);
    let mut sentences = corpus.sentences;
    let lexicon = OpinionLexicon::load(fixture("dutch_lexicon.txt")).expect("lexicon");
    annotate_opinions(&mut sentences, &lexicon);
    sentences
}

/// Seeded random vectors for every token in `sentences`.
pub fn random_embeddings(sentences: &[Sentence], dim: usize, seed: u64) -> EmbeddingTable {
    let mut table = EmbeddingTable::new(dim, OovPolicy::ZeroVector).unwrap();
    let mut words: Vec<&str> = sentences.iter().flat_map(|s| s.words()).collect();
    words.sort_unstable();
    words.dedup();
    for (i, w) in words.iter().enumerate() {
        let v = init_uniform(&[dim], -1.0, 1.0, seed.wrapping_add(i as u64)).unwrap();
        table.insert(w, v.data()).unwrap();
    }
    table
}

pub fn words(sentence: &Sentence, spans: &[cmla::Span]) -> Vec<String> {
    spans.iter().map(|s| sentence.span_text(s)).collect()
}
