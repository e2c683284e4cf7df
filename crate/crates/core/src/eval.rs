//! Exact-match chunk scoring and report formatting.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use crate::bio::{self, Head, Span};
use crate::data::{EmbeddingTable, Sentence};
use crate::error::{Error, Result};
use crate::model::{CmlaParams, Prediction, TokenScores};

/// Chunk counts with derived percentages. `0/0` ratios are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChunkMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ChunkMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(tp, tp + fp);
        let recall = pct(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ChunkMetrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Sums counts, then recomputes the ratios.
    pub fn combine(&self, other: &ChunkMetrics) -> Self {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

impl fmt::Display for ChunkMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.2} R={:.2} F1={:.2} (tp={} fp={} fn={})",
            self.precision, self.recall, self.f1, self.tp, self.fp, self.fn_
        )
    }
}

/// Scores predicted spans against gold, sentence by sentence. A prediction
/// counts only when a gold span with the same start, end and kind exists.
pub fn score_chunks(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<ChunkMetrics> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "gold covers {} sentences, predictions {}",
            gold.len(),
            pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let g: BTreeSet<&Span> = g.iter().collect();
        let p: BTreeSet<&Span> = p.iter().collect();
        let hit = p.intersection(&g).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    Ok(ChunkMetrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorpusReport {
    pub aspect: ChunkMetrics,
    pub opinion: ChunkMetrics,
    /// Both heads pooled.
    pub overall: ChunkMetrics,
}

impl CorpusReport {
    pub fn get(&self, head: Head) -> &ChunkMetrics {
        match head {
            Head::Aspect => &self.aspect,
            Head::Opinion => &self.opinion,
        }
    }

    fn rows(&self) -> [(&'static str, &ChunkMetrics); 3] {
        [
            ("aspect", &self.aspect),
            ("opinion", &self.opinion),
            ("overall", &self.overall),
        ]
    }

    /// Tab-separated: a header line, then one row per head and a pooled row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("head\ttp\tfp\tfn\tprecision\trecall\tf1\n");
        for (name, m) in self.rows() {
            let _ = writeln!(
                out,
                "{name}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
                m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            );
        }
        out
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}\n",
            "", "Precision", "Recall", "F1", "TP", "FP", "FN"
        );
        for (name, m) in self.rows() {
            let _ = writeln!(
                out,
                "{:<8} {:>9.2} {:>9.2} {:>9.2} {:>6} {:>6} {:>6}",
                name, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
            );
        }
        out
    }
}

/// Scores predicted sentences against gold sentences, head by head.
pub fn score_sentences(gold: &[Sentence], pred: &[Sentence]) -> Result<CorpusReport> {
    let spans = |ss: &[Sentence], head| ss.iter().map(|s| s.spans(head).to_vec()).collect::<Vec<_>>();
    let aspect = score_chunks(&spans(gold, Head::Aspect), &spans(pred, Head::Aspect))?;
    let opinion = score_chunks(&spans(gold, Head::Opinion), &spans(pred, Head::Opinion))?;
    Ok(CorpusReport {
        aspect,
        opinion,
        overall: aspect.combine(&opinion),
    })
}

/// Predicts every sentence and scores both heads.
pub fn score_corpus(
    params: &CmlaParams,
    dataset: &[Sentence],
    embeddings: &EmbeddingTable,
) -> Result<(CorpusReport, Vec<Prediction>)> {
    let predictions = dataset
        .iter()
        .map(|s| params.predict(s, embeddings))
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<Sentence> = dataset
        .iter()
        .zip(&predictions)
        .map(|(s, p)| Sentence {
            aspect_spans: p.aspect_spans.clone(),
            opinion_spans: p.opinion_spans.clone(),
            ..s.clone()
        })
        .collect();
    Ok((score_sentences(dataset, &predicted)?, predictions))
}

/// One row of an attention report.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    pub index: usize,
    pub token: String,
    pub score_aspect: f64,
    pub score_opinion: f64,
    pub gold_aspect: bio::Tag,
    pub gold_opinion: bio::Tag,
    pub pred_aspect: bio::Tag,
    pub pred_opinion: bio::Tag,
}

pub const ATTENTION_HEADER: &str =
    "index\ttoken\tscore_aspect\tscore_opinion\tgold_aspect\tgold_opinion\tpred_aspect\tpred_opinion";

/// Builds the per-token attention table of a predicted sentence. Both score
/// columns must sum to one within `1e-9`.
pub fn attention_report(sentence: &Sentence, prediction: &Prediction) -> Result<Vec<AttentionRow>> {
    let n = sentence.tokens.len();
    let scores: &[TokenScores] = &prediction.scores;
    if scores.len() != n {
        return Err(Error::invalid(format!("{} scores for {n} tokens", scores.len())));
    }
    if n > 0 {
        for (name, total) in [
            ("aspect", scores.iter().map(|s| s.attention_a).sum::<f64>()),
            ("opinion", scores.iter().map(|s| s.attention_p).sum::<f64>()),
        ] {
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "{name} attention sums to {total}, expected 1"
                )));
            }
        }
    }
    let gold_a = bio::spans_to_labels(n, &sentence.aspect_spans, Head::Aspect)?;
    let gold_p = bio::spans_to_labels(n, &sentence.opinion_spans, Head::Opinion)?;
    let tag_at = |labels: &bio::LabelSeq, i: usize| labels.labels.get(i).copied().unwrap_or(bio::Tag::O);
    Ok(sentence
        .tokens
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (tok, s))| AttentionRow {
            index: i,
            token: tok.text.clone(),
            score_aspect: s.attention_a,
            score_opinion: s.attention_p,
            gold_aspect: gold_a.labels[i],
            gold_opinion: gold_p.labels[i],
            pred_aspect: tag_at(&prediction.labels_a, i),
            pred_opinion: tag_at(&prediction.labels_p, i),
        })
        .collect())
}

/// Rows as tab-separated text under [`ATTENTION_HEADER`]. Scores use six decimals.
pub fn attention_tsv(rows: &[AttentionRow]) -> String {
    let mut out = format!("{ATTENTION_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
            r.index,
            r.token,
            r.score_aspect,
            r.score_opinion,
            r.gold_aspect,
            r.gold_opinion,
            r.pred_aspect,
            r.pred_opinion
        );
    }
    out
}
