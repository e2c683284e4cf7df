//! Parse a SemEval-style review file, print the aligned aspect spans, and add
//! opinion spans from a lexicon.
//!
//! ```text
//! cargo run --example semeval_ingest -- reviews.xml [lexicon.txt]
//! ```

use cmla::data::{annotate_opinions, parse_semeval_str, parse_semeval_xml, DatasetStats, OpinionLexicon};

const SAMPLE: &str = r#"<Reviews><Review rid="1"><sentences>
<sentence id="1:0"><text>The food was delicious but do not come here on an empty stomach.</text>
<Opinions>
<Opinion target="food" category="FOOD#QUALITY" polarity="positive" from="4" to="8"/>
<Opinion target="NULL" category="RESTAURANT#GENERAL" polarity="negative" from="0" to="0"/>
</Opinions></sentence>
</sentences></Review></Reviews>"#;

fn main() -> cmla::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let corpus = match args.first() {
        Some(path) => parse_semeval_xml(path)?,
        None => parse_semeval_str(SAMPLE, "sample")?,
    };
    for d in &corpus.diagnostics {
        eprintln!("warning: sentence {}: {}", d.source_id, d.message);
    }
    let mut sentences = corpus.sentences;
    let lexicon = match args.get(1) {
        Some(path) => OpinionLexicon::load(path)?,
        None => OpinionLexicon::new(["delicious", "empty"])?,
    };
    annotate_opinions(&mut sentences, &lexicon);

    for s in sentences.iter().take(10) {
        println!("{} {:?}", s.source_id, s.raw_text);
        for a in &s.annotations {
            println!("  target {:?} [{}, {}) {:?}", a.target, a.from, a.to, a.polarity);
        }
        for span in s.aspect_spans.iter().chain(&s.opinion_spans) {
            println!("  {:?} tokens [{}, {}) = {:?}", span.kind, span.start, span.end, s.span_text(span));
        }
    }
    let stats = DatasetStats::of(&sentences);
    println!(
        "{} sentences, {} tokens, {} aspect spans, {} opinion spans, {} skipped",
        stats.sentences, stats.tokens, stats.aspect_spans, stats.opinion_spans, corpus.skipped
    );
    Ok(())
}
