//! Convert spans to BIO tags and back, repair malformed tags, and merge the
//! aspect and opinion heads into one tag sequence.

use cmla::bio::{labels_to_spans, merge_heads, spans_to_labels};
use cmla::data::Sentence;
use cmla::{Head, LabelSeq, Span, Tag};

fn main() -> cmla::Result<()> {
    let s = Sentence::from_text("demo", "zeer goede ligging en prima terras");
    let aspects = spans_to_labels(6, &[Span::new(2, 3, Head::Aspect), Span::new(5, 6, Head::Aspect)], Head::Aspect)?;
    let opinions = spans_to_labels(6, &[Span::new(1, 2, Head::Opinion), Span::new(4, 5, Head::Opinion)], Head::Opinion)?;
    println!("tokens:   {}", s.words().join(" "));
    println!("aspect:   {}", aspects.to_string_tags());
    println!("opinion:  {}", opinions.to_string_tags());

    let conf = vec![0.9; 6];
    let merged = merge_heads(&aspects, &opinions, &conf, &conf)?;
    let merged: Vec<&str> = merged.iter().map(|t| t.as_str()).collect();
    println!("merged:   {}", merged.join(" "));

    let broken = LabelSeq::new(vec![Tag::O, Tag::I, Tag::I, Tag::O, Tag::B], Head::Aspect);
    let repaired = broken.repaired();
    println!("{} repairs to {}", broken.to_string_tags(), repaired.to_string_tags());
    for span in labels_to_spans(&repaired) {
        println!("  span [{}, {})", span.start, span.end);
    }
    Ok(())
}
