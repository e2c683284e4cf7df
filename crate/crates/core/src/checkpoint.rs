//! JSON checkpoints of [`CmlaParams`].
//!
//! ```json
//! {"format":"cmla-checkpoint","version":1,
//!  "embed_dim":16,"hidden_dim":16,"slices":4,"layer_count":2,
//!  "params":[{"name":"u_a","shape":[16],"data":[...]}, ...]}
//! ```
//!
//! Values are written in shortest round-trip form, so a save/load cycle is
//! bitwise exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CmlaParams, ModelConfig};
use crate::tensor::Tensor;

pub const FORMAT: &str = "cmla-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    embed_dim: usize,
    hidden_dim: usize,
    slices: usize,
    layer_count: usize,
    params: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn to_json(params: &CmlaParams) -> Result<String> {
    params.validate()?;
    let mut named = Vec::new();
    for (name, t) in params.named_tensors() {
        if !t.is_finite() {
            return Err(Error::Checkpoint(format!("parameter {name} is not finite")));
        }
        named.push(NamedTensor {
            name,
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        });
    }
    let c = &params.config;
    let ck = Checkpoint {
        format: FORMAT.to_string(),
        version: VERSION,
        embed_dim: c.embed_dim,
        hidden_dim: c.hidden_dim,
        slices: c.slices,
        layer_count: c.layers,
        params: named,
    };
    let mut s = serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<CmlaParams> {
    let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if ck.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
    }
    if ck.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
    }
    let config = ModelConfig {
        embed_dim: ck.embed_dim,
        hidden_dim: ck.hidden_dim,
        slices: ck.slices,
        layers: ck.layer_count,
    };
    config.validate()?;
    let names = CmlaParams::names();
    if ck.params.len() != names.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, found {}",
            names.len(),
            ck.params.len()
        )));
    }
    let mut tensors = Vec::with_capacity(names.len());
    for (expected, p) in names.iter().zip(ck.params) {
        if &p.name != expected {
            return Err(Error::Checkpoint(format!(
                "expected parameter {expected}, found {}",
                p.name
            )));
        }
        tensors.push(Tensor::new(&p.shape, p.data).map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?);
    }
    CmlaParams::from_tensors(config, tensors).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(params: &CmlaParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<CmlaParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ModelConfig {
        ModelConfig {
            embed_dim: 3,
            hidden_dim: 4,
            slices: 2,
            layers: 2,
        }
    }

    #[test]
    fn bitwise_roundtrip() {
        let mut p = CmlaParams::init(config(), 17).unwrap();
        p.u_a.data_mut()[0] = -0.0;
        p.u_a.data_mut()[1] = 1e-300;
        p.u_a.data_mut()[2] = 0.1 + 0.2;
        let json = to_json(&p).unwrap();
        let q = from_json(&json).unwrap();
        for (a, b) in p.tensors().into_iter().zip(q.tensors()) {
            assert!(a.bit_eq(b));
        }
        assert_eq!(to_json(&q).unwrap(), json);
    }

    #[test]
    fn rejects_tampering() {
        let p = CmlaParams::init(config(), 1).unwrap();
        let json = to_json(&p).unwrap();
        assert!(from_json(&json.replace("\"version\":1", "\"version\":2")).is_err());
        assert!(from_json(&json.replace("\"u_p\"", "\"u_q\"")).is_err());
        assert!(from_json(&json.replace("\"hidden_dim\":4", "\"hidden_dim\":5")).is_err());
        assert!(from_json("{}").is_err());
        let mut bad = p.clone();
        bad.v_a.data_mut()[0] = f64::NAN;
        assert!(to_json(&bad).is_err());
    }
}
