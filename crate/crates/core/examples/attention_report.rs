//! Overfit two Dutch review sentences and print their per-token attention
//! scores next to the gold and predicted tags.

use std::ops::ControlFlow;

use cmla::data::{annotate_opinions, parse_semeval_str, EmbeddingTable, OovPolicy, OpinionLexicon};
use cmla::eval::{attention_report, attention_tsv};
use cmla::model::train_with;
use cmla::tensor::init_uniform;
use cmla::{CmlaParams, Example, ModelConfig, TrainConfig};

const XML: &str = r#"<Reviews><Review rid="r"><sentences>
<sentence id="hotel"><text>zeer goede ligging en prima terras</text><Opinions>
<Opinion target="ligging" from="11" to="18"/><Opinion target="terras" from="28" to="34"/></Opinions></sentence>
<sentence id="child"><text>het was een leuke dag en ik heb veel gedaan</text><Opinions>
<Opinion target="dag" from="18" to="21"/></Opinions></sentence>
</sentences></Review></Reviews>"#;

fn main() -> cmla::Result<()> {
    let mut sentences = parse_semeval_str(XML, "inline")?.sentences;
    annotate_opinions(&mut sentences, &OpinionLexicon::new(["goede", "prima", "leuke"])?);

    let dim = 16;
    let mut table = EmbeddingTable::new(dim, OovPolicy::ZeroVector)?;
    for (i, w) in sentences.iter().flat_map(|s| s.words()).enumerate() {
        table.insert(w, init_uniform(&[dim], -1.0, 1.0, i as u64)?.data())?;
    }
    let examples = Example::batch(&sentences, &table)?;
    let config = ModelConfig {
        embed_dim: dim,
        hidden_dim: 16,
        slices: 4,
        layers: 2,
    };
    let train = TrainConfig {
        lr: 0.3,
        epochs: 400,
        ..TrainConfig::default()
    };
    let outcome = train_with(&examples, CmlaParams::init(config, 1)?, &train, |_, loss, _| {
        if loss < 0.01 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    println!("trained {} epochs, final loss {:.4}\n", outcome.loss_trace.len(), outcome.loss_trace.last().unwrap());

    for s in &sentences {
        let pred = outcome.params.predict(s, &table)?;
        println!("{}", s.raw_text);
        print!("{}", attention_tsv(&attention_report(s, &pred)?));
        println!();
    }
    Ok(())
}
