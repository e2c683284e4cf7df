//! Save a freshly initialised model, load it back, and confirm both produce
//! bitwise-identical predictions.

use cmla::checkpoint;
use cmla::tensor::init_uniform;
use cmla::{CmlaParams, ModelConfig};

fn main() -> cmla::Result<()> {
    let config = ModelConfig {
        embed_dim: 8,
        hidden_dim: 6,
        slices: 3,
        layers: 2,
    };
    let params = CmlaParams::init(config, 7)?;
    let dir = std::env::temp_dir().join("cmla-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| cmla::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("checkpoint.json");
    checkpoint::save(&params, &path)?;
    let loaded = checkpoint::load(&path)?;

    let x = init_uniform(&[5, 8], -1.0, 1.0, 0)?;
    let (a, b) = (params.forward(&x)?, loaded.forward(&x)?);
    assert!(a.logits_a.bit_eq(&b.logits_a) && a.logits_p.bit_eq(&b.logits_p));
    println!("{} parameters saved to {} and restored exactly", params.param_count(), path.display());
    Ok(())
}
