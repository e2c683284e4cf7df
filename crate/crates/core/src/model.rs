//! Coupled multi-layer attention network.
//!
//! Word embeddings are context-encoded by a GRU into hidden vectors `h_i`.
//! Each head (aspect, opinion) owns a prototype vector `u`. Per layer and
//! head, every `h_i` is composed against both prototypes through bilinear
//! tensors, giving `β_i ∈ R^{2K}`:
//!
//! ```text
//! β_i[k]     = tanh(h_iᵀ G_k u_self)      own-prototype half
//! β_i[K + k] = tanh(h_iᵀ D_k u_other)     coupling half
//! ```
//!
//! A second GRU turns the `β` sequence into features `r_i ∈ R^K`; `r_i v`
//! gives logits over `{B, I, O}`. The token score is the larger of the `B`
//! and `I` logits, normalised across the sentence by a softmax. Between
//! layers each prototype moves by the attention-weighted projection of the
//! hidden states: `u ← u + Σ_i a_i V h_i`.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bio::{self, Head, LabelSeq, MergedTag, Span, Tag};
use crate::data::{EmbeddingTable, Sentence};
use crate::error::{Error, Result};
use crate::gru::{GruParams, GruVars, GRU_FIELDS};
use crate::tensor::{Graph, Tensor, Var};

/// Columns of the classifier output that count towards the attention score.
const CHUNK_CLASSES: [usize; 2] = [0, 1];

pub const INIT_RANGE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Dimension of the input word embeddings.
    pub embed_dim: usize,
    /// Hidden size `d` of the context GRU and of the prototypes.
    pub hidden_dim: usize,
    /// Number of composition slices `K`.
    pub slices: usize,
    pub layers: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.slices == 0 || self.layers == 0 {
            return Err(Error::invalid(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// All learnable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CmlaParams {
    pub config: ModelConfig,
    pub u_a: Tensor,
    pub u_p: Tensor,
    /// Own-prototype composition tensors, `K × d × d`.
    pub g_a: Tensor,
    pub g_p: Tensor,
    /// Cross-prototype coupling tensors, `K × d × d`.
    pub d_a: Tensor,
    pub d_p: Tensor,
    pub gru_ctx: GruParams,
    pub gru_att_a: GruParams,
    pub gru_att_p: GruParams,
    /// Class weights, `K × 3`.
    pub v_a: Tensor,
    pub v_p: Tensor,
    /// Prototype update maps, `d × d`.
    pub upd_a: Tensor,
    pub upd_p: Tensor,
}

impl CmlaParams {
    /// Uniform `U[-0.2, 0.2]` initialisation of every weight; GRU biases start at zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, k) = (config.hidden_dim, config.slices);
        let r = INIT_RANGE;
        let mut u = |shape: &[usize]| Tensor::uniform(shape, -r, r, &mut rng);
        let u_a = u(&[d])?;
        let u_p = u(&[d])?;
        let g_a = u(&[k, d, d])?;
        let g_p = u(&[k, d, d])?;
        let d_a = u(&[k, d, d])?;
        let d_p = u(&[k, d, d])?;
        let v_a = u(&[k, 3])?;
        let v_p = u(&[k, 3])?;
        let upd_a = u(&[d, d])?;
        let upd_p = u(&[d, d])?;
        let gru_ctx = GruParams::random(config.embed_dim, d, r, &mut rng)?;
        let gru_att_a = GruParams::random(2 * k, k, r, &mut rng)?;
        let gru_att_p = GruParams::random(2 * k, k, r, &mut rng)?;
        Ok(CmlaParams {
            config,
            u_a,
            u_p,
            g_a,
            g_p,
            d_a,
            d_p,
            gru_ctx,
            gru_att_a,
            gru_att_p,
            v_a,
            v_p,
            upd_a,
            upd_p,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (d, k) = (config.hidden_dim, config.slices);
        Ok(CmlaParams {
            config,
            u_a: Tensor::zeros(&[d]),
            u_p: Tensor::zeros(&[d]),
            g_a: Tensor::zeros(&[k, d, d]),
            g_p: Tensor::zeros(&[k, d, d]),
            d_a: Tensor::zeros(&[k, d, d]),
            d_p: Tensor::zeros(&[k, d, d]),
            gru_ctx: GruParams::zeros(config.embed_dim, d),
            gru_att_a: GruParams::zeros(2 * k, k),
            gru_att_p: GruParams::zeros(2 * k, k),
            v_a: Tensor::zeros(&[k, 3]),
            v_p: Tensor::zeros(&[k, 3]),
            upd_a: Tensor::zeros(&[d, d]),
            upd_p: Tensor::zeros(&[d, d]),
        })
    }

    /// Parameter names in storage order.
    pub fn names() -> Vec<String> {
        let mut names: Vec<String> = ["u_a", "u_p", "g_a", "g_p", "d_a", "d_p", "v_a", "v_p", "upd_a", "upd_p"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for gru in ["gru_ctx", "gru_att_a", "gru_att_p"] {
            names.extend(GRU_FIELDS.iter().map(|f| format!("{gru}.{f}")));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![
            &self.u_a, &self.u_p, &self.g_a, &self.g_p, &self.d_a, &self.d_p, &self.v_a,
            &self.v_p, &self.upd_a, &self.upd_p,
        ];
        out.extend(self.gru_ctx.tensors());
        out.extend(self.gru_att_a.tensors());
        out.extend(self.gru_att_p.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.u_a,
            &mut self.u_p,
            &mut self.g_a,
            &mut self.g_p,
            &mut self.d_a,
            &mut self.d_p,
            &mut self.v_a,
            &mut self.v_p,
            &mut self.upd_a,
            &mut self.upd_p,
        ];
        out.extend(self.gru_ctx.tensors_mut());
        out.extend(self.gru_att_a.tensors_mut());
        out.extend(self.gru_att_p.tensors_mut());
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        Self::names().into_iter().zip(self.tensors()).collect()
    }

    /// Expected shape of every parameter, in storage order.
    pub fn expected_shapes(config: &ModelConfig) -> Vec<Vec<usize>> {
        let (e, d, k) = (config.embed_dim, config.hidden_dim, config.slices);
        let mut shapes = vec![
            vec![d],
            vec![d],
            vec![k, d, d],
            vec![k, d, d],
            vec![k, d, d],
            vec![k, d, d],
            vec![k, 3],
            vec![k, 3],
            vec![d, d],
            vec![d, d],
        ];
        for (input, hidden) in [(e, d), (2 * k, k), (2 * k, k)] {
            shapes.extend([
                vec![hidden, input],
                vec![hidden, input],
                vec![hidden, input],
                vec![hidden, hidden],
                vec![hidden, hidden],
                vec![hidden, hidden],
                vec![hidden],
                vec![hidden],
                vec![hidden],
            ]);
        }
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for ((name, t), shape) in self
            .named_tensors()
            .into_iter()
            .zip(Self::expected_shapes(&self.config))
        {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Rebuilds a parameter set from tensors in storage order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let n = p.tensors().len();
        if tensors.len() != n {
            return Err(Error::invalid(format!("expected {n} tensors, got {}", tensors.len())));
        }
        for (slot, t) in p.tensors_mut().into_iter().zip(tensors) {
            *slot = t;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> CmlaVars {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| g.leaf(t.clone(), trainable))
            .collect();
        self.vars_from(&vars)
    }

    /// Wraps handles already in a graph, given in storage order.
    pub fn vars_from(&self, v: &[Var]) -> CmlaVars {
        let gru = |base: usize, p: &GruParams| GruVars {
            w_z: v[base],
            w_r: v[base + 1],
            w_h: v[base + 2],
            u_z: v[base + 3],
            u_r: v[base + 4],
            u_h: v[base + 5],
            b_z: v[base + 6],
            b_r: v[base + 7],
            b_h: v[base + 8],
            input_dim: p.input_dim(),
            hidden_dim: p.hidden_dim(),
        };
        CmlaVars {
            config: self.config,
            u_a: v[0],
            u_p: v[1],
            g_a: v[2],
            g_p: v[3],
            d_a: v[4],
            d_p: v[5],
            v_a: v[6],
            v_p: v[7],
            upd_a: v[8],
            upd_p: v[9],
            gru_ctx: gru(10, &self.gru_ctx),
            gru_att_a: gru(19, &self.gru_att_a),
            gru_att_p: gru(28, &self.gru_att_p),
        }
    }

    /// Context-encoded hidden vectors for a sentence (`n × embed_dim` → `n × d`).
    pub fn encode(&self, embeddings: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(embeddings.clone());
        let h = vars.gru_ctx.run(&mut g, x, None)?;
        Ok(g.value(h).clone())
    }

    /// One attention layer for `head`, using the initial prototypes.
    pub fn attention_layer(&self, hidden: &Tensor, head: Head) -> Result<AttentionOutput> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let h = g.constant(hidden.clone());
        let (u_self, u_other) = match head {
            Head::Aspect => (vars.u_a, vars.u_p),
            Head::Opinion => (vars.u_p, vars.u_a),
        };
        let out = vars.attention(&mut g, h, u_self, u_other, head)?;
        Ok(AttentionOutput {
            features: g.value(out.features).clone(),
            logits: g.value(out.logits).clone(),
            scores: g.value(out.scores).data().to_vec(),
            normalized: g.value(out.normalized).data().to_vec(),
        })
    }

    /// Full forward pass on plain values.
    pub fn forward(&self, embeddings: &Tensor) -> Result<ForwardOutput> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(embeddings.clone());
        let out = vars.forward(&mut g, x)?;
        let probs_a = g.softmax(out.logits_a, 1)?;
        let probs_p = g.softmax(out.logits_p, 1)?;
        Ok(ForwardOutput {
            logits_a: g.value(out.logits_a).clone(),
            logits_p: g.value(out.logits_p).clone(),
            probs_a: g.value(probs_a).clone(),
            probs_p: g.value(probs_p).clone(),
            attention_a: g.value(out.attention_a).data().to_vec(),
            attention_p: g.value(out.attention_p).data().to_vec(),
        })
    }

    /// Tags a sentence, decodes spans and reports normalised attention.
    pub fn predict(&self, sentence: &Sentence, embeddings: &EmbeddingTable) -> Result<Prediction> {
        if sentence.tokens.is_empty() {
            return Ok(Prediction::default());
        }
        let x = embeddings.embed_sentence(sentence)?;
        let out = self.forward(&x)?;
        let n = sentence.tokens.len();
        let decode = |probs: &Tensor, head| {
            let mut labels = Vec::with_capacity(n);
            let mut conf = Vec::with_capacity(n);
            for i in 0..n {
                let (best, p) = argmax(probs.row(i));
                labels.push(Tag::from_index(best).expect("three classes"));
                conf.push(p);
            }
            (LabelSeq::new(labels, head), conf)
        };
        let (labels_a, conf_a) = decode(&out.probs_a, Head::Aspect);
        let (labels_p, conf_p) = decode(&out.probs_p, Head::Opinion);
        let merged = bio::merge_heads(&labels_a, &labels_p, &conf_a, &conf_p)?;
        let scores = (0..n)
            .map(|i| TokenScores {
                token_index: i,
                logits_a: row3(&out.logits_a, i),
                logits_p: row3(&out.logits_p, i),
                probs_a: row3(&out.probs_a, i),
                probs_p: row3(&out.probs_p, i),
                attention_a: out.attention_a[i],
                attention_p: out.attention_p[i],
            })
            .collect();
        Ok(Prediction {
            aspect_spans: bio::labels_to_spans(&labels_a),
            opinion_spans: bio::labels_to_spans(&labels_p),
            labels_a: labels_a.repaired(),
            labels_p: labels_p.repaired(),
            merged,
            scores,
        })
    }
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

fn row3(t: &Tensor, i: usize) -> [f64; 3] {
    let r = t.row(i);
    [r[0], r[1], r[2]]
}

/// [`CmlaParams`] bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct CmlaVars {
    pub config: ModelConfig,
    pub u_a: Var,
    pub u_p: Var,
    pub g_a: Var,
    pub g_p: Var,
    pub d_a: Var,
    pub d_p: Var,
    pub v_a: Var,
    pub v_p: Var,
    pub upd_a: Var,
    pub upd_p: Var,
    pub gru_ctx: GruVars,
    pub gru_att_a: GruVars,
    pub gru_att_p: GruVars,
}

/// Graph handles produced by one attention layer.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub compositions: Var,
    pub features: Var,
    pub logits: Var,
    pub scores: Var,
    pub normalized: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub hidden: Var,
    pub logits_a: Var,
    pub logits_p: Var,
    pub attention_a: Var,
    pub attention_p: Var,
}

impl CmlaVars {
    fn composition_parts(&self, head: Head) -> (Var, Var, GruVars, Var, Var) {
        match head {
            Head::Aspect => (self.g_a, self.d_a, self.gru_att_a, self.v_a, self.upd_a),
            Head::Opinion => (self.g_p, self.d_p, self.gru_att_p, self.v_p, self.upd_p),
        }
    }

    /// Composition vectors for every row of `hidden` (`n × d` → `n × 2K`).
    pub fn compose(
        &self,
        g: &mut Graph,
        hidden: Var,
        u_self: Var,
        u_other: Var,
        own: Var,
        coupling: Var,
    ) -> Result<Var> {
        let own_half = bilinear(g, hidden, own, u_self, self.config)?;
        let cross_half = bilinear(g, hidden, coupling, u_other, self.config)?;
        let both = g.concat(&[own_half, cross_half])?;
        Ok(g.tanh(both))
    }

    pub fn attention(
        &self,
        g: &mut Graph,
        hidden: Var,
        u_self: Var,
        u_other: Var,
        head: Head,
    ) -> Result<AttentionVars> {
        let (own, coupling, gru, v, _) = self.composition_parts(head);
        let compositions = self.compose(g, hidden, u_self, u_other, own, coupling)?;
        let features = gru.run(g, compositions, None)?;
        let logits = g.matmul(features, v)?;
        let scores = g.row_max(logits, &CHUNK_CLASSES)?;
        let normalized = g.softmax(scores, 0)?;
        Ok(AttentionVars {
            compositions,
            features,
            logits,
            scores,
            normalized,
        })
    }

    pub fn forward(&self, g: &mut Graph, embeddings: Var) -> Result<ForwardVars> {
        let shape = g.shape(embeddings).to_vec();
        if shape.len() != 2 || shape[1] != self.config.embed_dim {
            return Err(Error::shape(format!(
                "sentence embeddings: expected [n, {}], got {shape:?}",
                self.config.embed_dim
            )));
        }
        let hidden = self.gru_ctx.run(g, embeddings, None)?;
        let (mut u_a, mut u_p) = (self.u_a, self.u_p);
        let mut last = None;
        for layer in 0..self.config.layers {
            let att_a = self.attention(g, hidden, u_a, u_p, Head::Aspect)?;
            let att_p = self.attention(g, hidden, u_p, u_a, Head::Opinion)?;
            if layer + 1 < self.config.layers {
                let next_a = prototype_step(g, u_a, att_a.normalized, hidden, self.upd_a)?;
                let next_p = prototype_step(g, u_p, att_p.normalized, hidden, self.upd_p)?;
                u_a = next_a;
                u_p = next_p;
            }
            last = Some((att_a, att_p));
        }
        let (att_a, att_p) = last.expect("at least one layer");
        Ok(ForwardVars {
            hidden,
            logits_a: att_a.logits,
            logits_p: att_p.logits,
            attention_a: att_a.normalized,
            attention_p: att_p.normalized,
        })
    }
}

/// `H (G u)` for a `K × d × d` tensor `G`, giving `n × K`.
fn bilinear(g: &mut Graph, hidden: Var, tensor: Var, u: Var, cfg: ModelConfig) -> Result<Var> {
    let (k, d) = (cfg.slices, cfg.hidden_dim);
    let flat = g.reshape(tensor, &[k * d, d])?;
    let gu = g.matmul(flat, u)?;
    let m = g.reshape(gu, &[k, d])?;
    let mt = g.transpose(m)?;
    g.matmul(hidden, mt)
}

/// `u + V (Hᵀ w)` inside a graph.
fn prototype_step(g: &mut Graph, u: Var, weights: Var, hidden: Var, update: Var) -> Result<Var> {
    let ht = g.transpose(hidden)?;
    let pooled = g.matmul(ht, weights)?;
    let moved = g.matmul(update, pooled)?;
    g.add(u, moved)
}

/// Composition vector of one hidden vector against two prototypes.
pub fn compose(
    h: &[f64],
    u_self: &[f64],
    u_other: &[f64],
    own: &Tensor,
    coupling: &Tensor,
) -> Result<Vec<f64>> {
    let d = h.len();
    let k = own.shape().first().copied().unwrap_or(0);
    for (name, t) in [("own", own), ("coupling", coupling)] {
        if t.shape() != [k, d, d] {
            return Err(Error::shape(format!(
                "{name} tensor: expected [{k}, {d}, {d}], got {:?}",
                t.shape()
            )));
        }
    }
    if u_self.len() != d || u_other.len() != d {
        return Err(Error::shape("prototype length differs from hidden size"));
    }
    let cfg = ModelConfig {
        embed_dim: d,
        hidden_dim: d,
        slices: k,
        layers: 1,
    };
    let mut g = Graph::new();
    let hv = g.constant(Tensor::matrix(1, d, h.to_vec())?);
    let us = g.constant(Tensor::vector(u_self.to_vec()));
    let uo = g.constant(Tensor::vector(u_other.to_vec()));
    let gv = g.constant(own.clone());
    let dv = g.constant(coupling.clone());
    let own_half = bilinear(&mut g, hv, gv, us, cfg)?;
    let cross_half = bilinear(&mut g, hv, dv, uo, cfg)?;
    let both = g.concat(&[own_half, cross_half])?;
    let out = g.tanh(both);
    Ok(g.value(out).data().to_vec())
}

/// `u + Σ_i w_i V h_i`. The weights must sum to one.
pub fn update_prototype(
    u: &[f64],
    weights: &[f64],
    hidden: &[Vec<f64>],
    update: &Tensor,
) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("attention weights sum to {total}, not 1")));
    }
    if weights.len() != hidden.len() {
        return Err(Error::shape(format!(
            "{} weights for {} hidden vectors",
            weights.len(),
            hidden.len()
        )));
    }
    let mut g = Graph::new();
    let uv = g.constant(Tensor::vector(u.to_vec()));
    let wv = g.constant(Tensor::vector(weights.to_vec()));
    let hv = g.constant(Tensor::from_rows(hidden)?);
    let vv = g.constant(update.clone());
    let out = prototype_step(&mut g, uv, wv, hv, vv)?;
    Ok(g.value(out).data().to_vec())
}

/// Mean token cross-entropy of each head, summed over the two heads.
pub fn loss_graph(
    g: &mut Graph,
    logits_a: Var,
    logits_p: Var,
    gold_a: &LabelSeq,
    gold_p: &LabelSeq,
) -> Result<Var> {
    let mut total = None;
    for (logits, gold) in [(logits_a, gold_a), (logits_p, gold_p)] {
        let n = g.shape(logits)[0];
        if gold.len() != n {
            return Err(Error::shape(format!("{n} logit rows for {} gold labels", gold.len())));
        }
        let lp = g.log_softmax(logits, 1)?;
        let picked = g.pick(lp, &gold.indices())?;
        let mean = g.mean(picked);
        let nll = g.scale(mean, -1.0);
        total = Some(match total {
            None => nll,
            Some(t) => g.add(t, nll)?,
        });
    }
    Ok(total.expect("two heads"))
}

/// Loss on plain logits (`n × 3` each).
pub fn loss(logits_a: &Tensor, logits_p: &Tensor, gold_a: &LabelSeq, gold_p: &LabelSeq) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.constant(logits_a.clone());
    let p = g.constant(logits_p.clone());
    let l = loss_graph(&mut g, a, p, gold_a, gold_p)?;
    Ok(g.value(l).data()[0])
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub features: Tensor,
    pub logits: Tensor,
    pub scores: Vec<f64>,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits_a: Tensor,
    pub logits_p: Tensor,
    pub probs_a: Tensor,
    pub probs_p: Tensor,
    pub attention_a: Vec<f64>,
    pub attention_p: Vec<f64>,
}

/// Per-token scores of a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenScores {
    pub token_index: usize,
    pub logits_a: [f64; 3],
    pub logits_p: [f64; 3],
    pub probs_a: [f64; 3],
    pub probs_p: [f64; 3],
    /// Normalised over the sentence.
    pub attention_a: f64,
    pub attention_p: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Prediction {
    pub aspect_spans: Vec<Span>,
    pub opinion_spans: Vec<Span>,
    pub labels_a: LabelSeq,
    pub labels_p: LabelSeq,
    pub merged: Vec<MergedTag>,
    pub scores: Vec<TokenScores>,
}

/// A training sentence: embeddings plus gold tags for both heads.
#[derive(Debug, Clone)]
pub struct Example {
    pub embeddings: Tensor,
    pub gold_a: LabelSeq,
    pub gold_p: LabelSeq,
}

impl Example {
    pub fn from_sentence(sentence: &Sentence, table: &EmbeddingTable) -> Result<Self> {
        let n = sentence.tokens.len();
        Ok(Example {
            embeddings: table.embed_sentence(sentence)?,
            gold_a: bio::spans_to_labels(n, &sentence.aspect_spans, Head::Aspect)?,
            gold_p: bio::spans_to_labels(n, &sentence.opinion_spans, Head::Opinion)?,
        })
    }

    /// Converts sentences, skipping those without tokens.
    pub fn batch(sentences: &[Sentence], table: &EmbeddingTable) -> Result<Vec<Example>> {
        sentences
            .iter()
            .filter(|s| !s.tokens.is_empty())
            .map(|s| Example::from_sentence(s, table))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling per update.
    pub clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.07,
            epochs: 50,
            seed: 42,
            clip: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: CmlaParams,
    /// Mean per-sentence loss of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Loss and gradients for one sentence, in storage order.
pub fn loss_and_grads(params: &CmlaParams, example: &Example) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.tensors().into_iter().map(|t| g.param(t.clone())).collect();
    let cv = params.vars_from(&vars);
    let x = g.constant(example.embeddings.clone());
    let out = cv.forward(&mut g, x)?;
    let l = loss_graph(&mut g, out.logits_a, out.logits_p, &example.gold_a, &example.gold_p)?;
    let value = g.value(l).data()[0];
    let mut grads = g.backward(l)?;
    let grads = vars
        .iter()
        .map(|v| grads.take(*v).expect("trainable leaf"))
        .collect();
    Ok((value, grads))
}

/// Plain per-sentence SGD with global-norm clipping.
pub fn train(dataset: &[Example], params: CmlaParams, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, params, config, |_, _, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `on_epoch(epoch, mean_loss, params)` after every
/// epoch; returning `Break` stops early.
pub fn train_with<F>(
    dataset: &[Example],
    mut params: CmlaParams,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64, &CmlaParams) -> ControlFlow<()>,
{
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.lr.is_nan() || config.lr <= 0.0 {
        return Err(Error::invalid(format!("learning rate must be positive, got {}", config.lr)));
    }
    if config.clip.is_nan() || config.clip <= 0.0 {
        return Err(Error::invalid(format!("clip must be positive, got {}", config.clip)));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &idx in &order {
            let (l, grads) = loss_and_grads(&params, &dataset[idx])?;
            if !l.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NumericFailure {
                    epoch,
                    sentence: idx,
                });
            }
            total += l;
            let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
            let step = if norm > config.clip {
                config.lr * config.clip / norm
            } else {
                config.lr
            };
            for (p, g) in params.tensors_mut().into_iter().zip(&grads) {
                for (w, dw) in p.data_mut().iter_mut().zip(g.data()) {
                    *w -= step * dw;
                }
            }
        }
        let mean = total / dataset.len() as f64;
        trace.push(mean);
        if on_epoch(epoch, mean, &params).is_break() {
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, init_uniform};

    fn small() -> ModelConfig {
        ModelConfig {
            embed_dim: 5,
            hidden_dim: 4,
            slices: 3,
            layers: 2,
        }
    }

    #[test]
    fn compose_zero_tensors_give_zero() {
        let z = Tensor::zeros(&[2, 3, 3]);
        let out = compose(&[0.1, 0.2, 0.3], &[1.0, 1.0, 1.0], &[-1.0, 0.0, 1.0], &z, &z).unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn compose_scalar_case() {
        let own = Tensor::new(&[1, 1, 1], vec![2.0]).unwrap();
        let cross = Tensor::new(&[1, 1, 1], vec![0.0]).unwrap();
        let out = compose(&[0.5], &[1.0], &[3.0], &own, &cross).unwrap();
        assert_eq!(out[0], 1.0f64.tanh());
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn compose_matches_triple_loop() {
        let (k, d) = (3, 4);
        let own = init_uniform(&[k, d, d], -1.0, 1.0, 1).unwrap();
        let cross = init_uniform(&[k, d, d], -1.0, 1.0, 2).unwrap();
        let h = init_uniform(&[d], -1.0, 1.0, 3).unwrap();
        let us = init_uniform(&[d], -1.0, 1.0, 4).unwrap();
        let uo = init_uniform(&[d], -1.0, 1.0, 5).unwrap();
        let naive = |t: &Tensor, u: &Tensor| -> Vec<f64> {
            (0..k)
                .map(|s| {
                    let mut acc = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            acc += h.data()[i] * t.data()[s * d * d + i * d + j] * u.data()[j];
                        }
                    }
                    acc.tanh()
                })
                .collect()
        };
        let mut expected = naive(&own, &us);
        expected.extend(naive(&cross, &uo));
        let got = compose(h.data(), us.data(), uo.data(), &own, &cross).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(compose(&[0.0; 3], us.data(), uo.data(), &own, &cross).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn update_prototype_cases() {
        let h = vec![vec![1.0, 2.0], vec![-3.0, 0.5]];
        let u = [0.25, -0.5];
        let same = update_prototype(&u, &[0.3, 0.7], &h, &Tensor::zeros(&[2, 2])).unwrap();
        assert_eq!(same, u.to_vec());

        let one = update_prototype(&u, &[1.0], &[vec![0.5, 0.75]], &Tensor::identity(2)).unwrap();
        assert_eq!(one, vec![0.75, 0.25]);

        assert!(update_prototype(&u, &[0.3, 0.6], &h, &Tensor::identity(2)).is_err());

        let v = init_uniform(&[2, 2], -1.0, 1.0, 9).unwrap();
        let w = [0.3, 0.7];
        let got = update_prototype(&u, &w, &h, &v).unwrap();
        let mut expected = u.to_vec();
        for (wi, hi) in w.iter().zip(&h) {
            for r in 0..2 {
                for c in 0..2 {
                    expected[r] += wi * v.data()[r * 2 + c] * hi[c];
                }
            }
        }
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_cases() {
        let gold_a = LabelSeq::new(vec![Tag::B, Tag::O], Head::Aspect);
        let gold_p = LabelSeq::new(vec![Tag::O, Tag::I], Head::Opinion);
        let zeros = Tensor::zeros(&[2, 3]);
        let l = loss(&zeros, &zeros, &gold_a, &gold_p).unwrap();
        assert!((l - 2.0 * 3f64.ln()).abs() < 1e-12);

        let big = 60.0;
        let sharp_a = Tensor::matrix(2, 3, vec![big, 0., 0., 0., 0., big]).unwrap();
        let sharp_p = Tensor::matrix(2, 3, vec![0., 0., big, 0., big, 0.]).unwrap();
        let l = loss(&sharp_a, &sharp_p, &gold_a, &gold_p).unwrap();
        assert!((0.0..1e-20).contains(&l));

        let la = init_uniform(&[2, 3], -2.0, 2.0, 1).unwrap();
        let lp = init_uniform(&[2, 3], -2.0, 2.0, 2).unwrap();
        let direct = |t: &Tensor, gold: &LabelSeq| -> f64 {
            let mut s = 0.0;
            for i in 0..2 {
                let row = t.row(i);
                let z: f64 = row.iter().map(|x| x.exp()).sum();
                s -= (row[gold.labels[i].index()].exp() / z).ln();
            }
            s / 2.0
        };
        let expected = direct(&la, &gold_a) + direct(&lp, &gold_p);
        assert!((loss(&la, &lp, &gold_a, &gold_p).unwrap() - expected).abs() < 1e-12);

        let short = LabelSeq::new(vec![Tag::O], Head::Aspect);
        assert!(loss(&la, &lp, &short, &gold_p).is_err());
    }

    #[test]
    fn single_token_forward() {
        let p = CmlaParams::init(small(), 3).unwrap();
        let x = init_uniform(&[1, 5], -1.0, 1.0, 4).unwrap();
        let out = p.forward(&x).unwrap();
        assert!((out.probs_a.sum() - 1.0).abs() <= 1e-12);
        assert!((out.probs_p.sum() - 1.0).abs() <= 1e-12);
        assert_eq!(out.attention_a, vec![1.0]);
        assert_eq!(out.attention_p, vec![1.0]);
    }

    #[test]
    fn zero_params_attend_uniformly() {
        let p = CmlaParams::zeros(small()).unwrap();
        let x = init_uniform(&[4, 5], -1.0, 1.0, 4).unwrap();
        let out = p.forward(&x).unwrap();
        for a in out.attention_a.iter().chain(&out.attention_p) {
            assert!((a - 0.25).abs() < 1e-15);
        }
        let h = p.encode(&x).unwrap();
        let att = p.attention_layer(&h, Head::Opinion).unwrap();
        assert_eq!(att.normalized.len(), 4);
        assert!(att.features.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_layer_is_causal() {
        let cfg = ModelConfig { layers: 1, ..small() };
        let p = CmlaParams::init(cfg, 11).unwrap();
        let x = init_uniform(&[5, 5], -1.0, 1.0, 12).unwrap();
        let base = p.forward(&x).unwrap();
        // duplicate token 2 in place
        let mut rows: Vec<Vec<f64>> = (0..5).map(|i| x.row(i).to_vec()).collect();
        rows.insert(2, rows[2].clone());
        let dup = p.forward(&Tensor::from_rows(&rows).unwrap()).unwrap();
        for i in 0..2 {
            assert_eq!(base.logits_a.row(i), dup.logits_a.row(i));
            assert_eq!(base.logits_p.row(i), dup.logits_p.row(i));
        }
    }

    #[test]
    fn full_model_gradient_check() {
        let cfg = ModelConfig {
            embed_dim: 6,
            hidden_dim: 6,
            slices: 3,
            layers: 2,
        };
        let params = CmlaParams::init(cfg, 5).unwrap();
        let x = init_uniform(&[4, 6], -1.0, 1.0, 6).unwrap();
        let gold_a = LabelSeq::new(vec![Tag::O, Tag::B, Tag::I, Tag::O], Head::Aspect);
        let gold_p = LabelSeq::new(vec![Tag::B, Tag::O, Tag::O, Tag::B], Head::Opinion);
        let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
        let report = grad_check(
            |g, v| {
                let cv = params.vars_from(v);
                let xv = g.constant(x.clone());
                let out = cv.forward(g, xv)?;
                loss_graph(g, out.logits_a, out.logits_p, &gold_a, &gold_p)
            },
            &tensors,
            1e-5,
            8,
            1,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert!(report.coordinates >= 100);
    }

    #[test]
    fn params_roundtrip_through_tensor_list() {
        let p = CmlaParams::init(small(), 1).unwrap();
        let q = CmlaParams::from_tensors(p.config, p.tensors().into_iter().cloned().collect()).unwrap();
        assert_eq!(p, q);
        assert_eq!(CmlaParams::names().len(), p.tensors().len());
        let mut bad: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        bad[3] = Tensor::zeros(&[1]);
        assert!(CmlaParams::from_tensors(p.config, bad).is_err());
    }

    #[test]
    fn prototypes_start_in_init_range() {
        let p = CmlaParams::init(small(), 77).unwrap();
        for t in [&p.u_a, &p.u_p] {
            assert!(t.data().iter().all(|x| x.abs() <= INIT_RANGE));
        }
    }

    #[test]
    fn training_rejects_bad_config() {
        let p = CmlaParams::init(small(), 1).unwrap();
        let cfg = TrainConfig::default();
        assert!(train(&[], p.clone(), &cfg).is_err());
        let ex = Example {
            embeddings: Tensor::zeros(&[2, 5]),
            gold_a: LabelSeq::all_outside(2, Head::Aspect),
            gold_p: LabelSeq::all_outside(2, Head::Opinion),
        };
        let bad = TrainConfig { lr: 0.0, ..cfg };
        assert!(train(std::slice::from_ref(&ex), p.clone(), &bad).is_err());
        let zero = TrainConfig { epochs: 0, ..cfg };
        let out = train(&[ex], p.clone(), &zero).unwrap();
        assert!(out.loss_trace.is_empty());
        assert_eq!(out.params, p);
    }

    #[test]
    fn nan_input_is_reported_with_sentence_index() {
        let p = CmlaParams::init(small(), 1).unwrap();
        let good = Example {
            embeddings: Tensor::zeros(&[2, 5]),
            gold_a: LabelSeq::all_outside(2, Head::Aspect),
            gold_p: LabelSeq::all_outside(2, Head::Opinion),
        };
        let mut bad = good.clone();
        bad.embeddings.data_mut()[3] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        match train(&[good, bad], p, &cfg) {
            Err(Error::NumericFailure { sentence, epoch }) => {
                assert_eq!(sentence, 1);
                assert_eq!(epoch, 0);
            }
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }
}
