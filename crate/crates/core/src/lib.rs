//! Joint aspect and opinion term extraction with coupled multi-layer attentions.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`]: dense f64 tensors and a reverse-mode autodiff tape.
//! - [`gru`]: gated recurrent unit cells built on the tape.
//! - [`model`]: the coupled attention network, its loss and SGD training.
//! - [`bio`]: BIO label sequences, spans and head merging.
//! - [`data`]: SemEval XML, embeddings, opinion lexicons, synthetic corpora.
//! - [`eval`]: exact-match chunk scoring and attention reports.
//! - [`checkpoint`]: lossless JSON parameter files.
//! - [`cli`]: the `cmla` command-line driver.
//!
//! ```
//! use cmla::data::{generate_synthetic, SynthConfig};
//! use cmla::eval::score_corpus;
//! use cmla::model::{train, CmlaParams, Example, ModelConfig, TrainConfig};
//!
//! let corpus = generate_synthetic(&SynthConfig::default())?;
//! let examples = Example::batch(&corpus.sentences, &corpus.embeddings)?;
//! let config = ModelConfig { embed_dim: 16, hidden_dim: 16, slices: 4, layers: 2 };
//! let params = CmlaParams::init(config, 42)?;
//! let trained = train(&examples, params, &TrainConfig { epochs: 200, ..Default::default() })?;
//! let (report, _predictions) = score_corpus(&trained.params, &corpus.sentences, &corpus.embeddings)?;
//! assert!(report.aspect.f1 >= 95.0 && report.opinion.f1 >= 95.0);
//! # Ok::<(), cmla::Error>(())
//! ```

pub mod bio;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gru;
pub mod model;
pub mod tensor;

pub use bio::{Head, LabelSeq, MergedTag, Span, Tag};
pub use data::{EmbeddingTable, OovPolicy, OpinionLexicon, Sentence, SynthConfig};
pub use error::{Error, Result};
pub use eval::{ChunkMetrics, CorpusReport};
pub use model::{CmlaParams, Example, ModelConfig, Prediction, TrainConfig};
pub use tensor::{Graph, Tensor, Var};
