//! BIO label sequences, token spans and the merged five-category view.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Head {
    Aspect,
    Opinion,
}

impl Head {
    pub const BOTH: [Head; 2] = [Head::Aspect, Head::Opinion];

    pub fn name(self) -> &'static str {
        match self {
            Head::Aspect => "aspect",
            Head::Opinion => "opinion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    B,
    I,
    O,
}

impl Tag {
    /// Class order used by the classifier outputs.
    pub const ALL: [Tag; 3] = [Tag::B, Tag::I, Tag::O];

    pub fn index(self) -> usize {
        match self {
            Tag::B => 0,
            Tag::I => 1,
            Tag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::O => "O",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: Head,
}

impl Span {
    pub fn new(start: usize, end: usize, kind: Head) -> Self {
        Span { start, end, kind }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSeq {
    pub labels: Vec<Tag>,
    pub head: Head,
}

impl Default for LabelSeq {
    fn default() -> Self {
        LabelSeq::new(Vec::new(), Head::Aspect)
    }
}

impl LabelSeq {
    pub fn new(labels: Vec<Tag>, head: Head) -> Self {
        LabelSeq { labels, head }
    }

    pub fn all_outside(n: usize, head: Head) -> Self {
        LabelSeq::new(vec![Tag::O; n], head)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// No `I` at the start of the sequence or directly after an `O`.
    pub fn is_well_formed(&self) -> bool {
        let mut prev = Tag::O;
        for &t in &self.labels {
            if t == Tag::I && prev == Tag::O {
                return false;
            }
            prev = t;
        }
        true
    }

    /// Orphan `I` tags become `B`.
    pub fn repaired(&self) -> LabelSeq {
        let mut prev = Tag::O;
        let labels = self
            .labels
            .iter()
            .map(|&t| {
                let t = if t == Tag::I && prev == Tag::O { Tag::B } else { t };
                prev = t;
                t
            })
            .collect();
        LabelSeq::new(labels, self.head)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.labels.iter().map(|t| t.index()).collect()
    }

    pub fn to_string_tags(&self) -> String {
        self.labels
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Checks the span invariants for one kind: nonempty, in range, sorted and disjoint.
pub fn validate_spans(n_tokens: usize, spans: &[Span]) -> Result<()> {
    let mut prev_end = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.is_empty() || s.end > n_tokens {
            return Err(Error::invalid(format!(
                "span [{}, {}) invalid for {n_tokens} tokens",
                s.start, s.end
            )));
        }
        if i > 0 && s.start < prev_end {
            return Err(Error::invalid(format!(
                "span [{}, {}) overlaps or precedes the previous span",
                s.start, s.end
            )));
        }
        prev_end = s.end;
    }
    Ok(())
}

/// Encodes spans of a single kind as BIO tags. Spans need not be sorted but
/// must not overlap.
pub fn spans_to_labels(n_tokens: usize, spans: &[Span], head: Head) -> Result<LabelSeq> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    validate_spans(n_tokens, &sorted)?;
    let mut labels = vec![Tag::O; n_tokens];
    for s in &sorted {
        labels[s.start] = Tag::B;
        for l in &mut labels[s.start + 1..s.end] {
            *l = Tag::I;
        }
    }
    Ok(LabelSeq::new(labels, head))
}

/// Decodes maximal `B I*` runs. Total: an orphan `I` opens a new span.
pub fn labels_to_spans(labels: &LabelSeq) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in labels.labels.iter().enumerate() {
        match (t, open) {
            (Tag::B, Some(s)) => {
                spans.push(Span::new(s, i, labels.head));
                open = Some(i);
            }
            (Tag::B, None) | (Tag::I, None) => open = Some(i),
            (Tag::I, Some(_)) => {}
            (Tag::O, Some(s)) => {
                spans.push(Span::new(s, i, labels.head));
                open = None;
            }
            (Tag::O, None) => {}
        }
    }
    if let Some(s) = open {
        spans.push(Span::new(s, labels.labels.len(), labels.head));
    }
    spans
}

/// One of the five merged token categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MergedTag {
    BeginAspect,
    InsideAspect,
    BeginOpinion,
    InsideOpinion,
    Outside,
}

impl MergedTag {
    pub fn new(head: Head, tag: Tag) -> Self {
        match (head, tag) {
            (_, Tag::O) => MergedTag::Outside,
            (Head::Aspect, Tag::B) => MergedTag::BeginAspect,
            (Head::Aspect, Tag::I) => MergedTag::InsideAspect,
            (Head::Opinion, Tag::B) => MergedTag::BeginOpinion,
            (Head::Opinion, Tag::I) => MergedTag::InsideOpinion,
        }
    }

    pub fn head(self) -> Option<Head> {
        match self {
            MergedTag::BeginAspect | MergedTag::InsideAspect => Some(Head::Aspect),
            MergedTag::BeginOpinion | MergedTag::InsideOpinion => Some(Head::Opinion),
            MergedTag::Outside => None,
        }
    }

    pub fn tag(self) -> Tag {
        match self {
            MergedTag::BeginAspect | MergedTag::BeginOpinion => Tag::B,
            MergedTag::InsideAspect | MergedTag::InsideOpinion => Tag::I,
            MergedTag::Outside => Tag::O,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MergedTag::BeginAspect => "B-ASP",
            MergedTag::InsideAspect => "I-ASP",
            MergedTag::BeginOpinion => "B-OP",
            MergedTag::InsideOpinion => "I-OP",
            MergedTag::Outside => "O",
        }
    }
}

impl fmt::Display for MergedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// True when every inside tag continues a chunk of its own kind.
pub fn merged_is_well_formed(tags: &[MergedTag]) -> bool {
    let mut prev = MergedTag::Outside;
    for &t in tags {
        if t.tag() == Tag::I && (prev.head() != t.head()) {
            return false;
        }
        prev = t;
    }
    true
}

/// Combines the two heads into one five-category sequence.
///
/// A token tagged by one head keeps that tag. A token tagged by both goes to
/// the head with the higher argmax-class probability (aspect on ties). Inside
/// tags left dangling by the resolution are turned into begin tags.
pub fn merge_heads(
    aspect: &LabelSeq,
    opinion: &LabelSeq,
    conf_aspect: &[f64],
    conf_opinion: &[f64],
) -> Result<Vec<MergedTag>> {
    let n = aspect.len();
    if opinion.len() != n || conf_aspect.len() != n || conf_opinion.len() != n {
        return Err(Error::invalid(format!(
            "merge_heads: lengths {} / {} / {} / {}",
            n,
            opinion.len(),
            conf_aspect.len(),
            conf_opinion.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut prev = MergedTag::Outside;
    for i in 0..n {
        let (a, p) = (aspect.labels[i], opinion.labels[i]);
        let mut t = match (a, p) {
            (Tag::O, Tag::O) => MergedTag::Outside,
            (_, Tag::O) => MergedTag::new(Head::Aspect, a),
            (Tag::O, _) => MergedTag::new(Head::Opinion, p),
            _ if conf_aspect[i] >= conf_opinion[i] => MergedTag::new(Head::Aspect, a),
            _ => MergedTag::new(Head::Opinion, p),
        };
        if t.tag() == Tag::I && prev.head() != t.head() {
            t = MergedTag::new(t.head().expect("inside tag has a head"), Tag::B);
        }
        out.push(t);
        prev = t;
    }
    Ok(out)
}
