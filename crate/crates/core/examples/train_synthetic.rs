//! Train on the synthetic corpus and report chunk F1 as training progresses.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [hidden] [slices] [lr] [epochs]
//! ```

use std::ops::ControlFlow;

use cmla::data::generate_synthetic;
use cmla::eval::score_corpus;
use cmla::model::{train_with, CmlaParams, Example, ModelConfig, TrainConfig};
use cmla::SynthConfig;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> cmla::Result<()> {
    let corpus = generate_synthetic(&SynthConfig::default())?;
    let examples = Example::batch(&corpus.sentences, &corpus.embeddings)?;
    let config = ModelConfig {
        embed_dim: corpus.embeddings.dim(),
        hidden_dim: arg(1, 16),
        slices: arg(2, 4),
        layers: 2,
    };
    let train = TrainConfig {
        lr: arg(3, 0.07),
        epochs: arg(4, 200),
        ..TrainConfig::default()
    };
    let params = CmlaParams::init(config, train.seed)?;
    println!("{} sentences, {} parameters", examples.len(), params.param_count());

    let start = std::time::Instant::now();
    let outcome = train_with(&examples, params, &train, |epoch, loss, p| {
        if (epoch + 1) % 10 != 0 {
            return ControlFlow::Continue(());
        }
        let (report, _) = score_corpus(p, &corpus.sentences, &corpus.embeddings).expect("scoring");
        println!(
            "epoch {:>4}  loss {loss:.5}  aspect F1 {:>6.2}  opinion F1 {:>6.2}  {:.1}s",
            epoch + 1,
            report.aspect.f1,
            report.opinion.f1,
            start.elapsed().as_secs_f64()
        );
        if report.aspect.f1 >= 100.0 && report.opinion.f1 >= 100.0 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;

    let (report, _) = score_corpus(&outcome.params, &corpus.sentences, &corpus.embeddings)?;
    print!("{}", report.to_table());
    Ok(())
}
