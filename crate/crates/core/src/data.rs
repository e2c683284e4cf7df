//! Dataset ingestion: SemEval-style review XML, tokenisation with character
//! offsets, span alignment, word-embedding files, opinion lexicons and a
//! seeded synthetic corpus generator.
//!
//! All character offsets are 0-based, end-exclusive and count Unicode scalar
//! values, so `from="4" to="8"` in *The food was …* selects `food`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bio::{Head, Span};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// One `Opinion` (or `aspectTerm`) element, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetAnnotation {
    /// `None` for `NULL` targets.
    pub target: Option<String>,
    pub category: Option<String>,
    pub polarity: Option<String>,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub raw_text: String,
    pub tokens: Vec<Token>,
    pub aspect_spans: Vec<Span>,
    pub opinion_spans: Vec<Span>,
    pub source_id: String,
    pub annotations: Vec<TargetAnnotation>,
}

impl Sentence {
    /// Tokenises `text`; no gold spans.
    pub fn from_text(source_id: impl Into<String>, text: &str) -> Self {
        Sentence {
            raw_text: text.to_string(),
            tokens: tokenize(text),
            source_id: source_id.into(),
            ..Default::default()
        }
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Original text covered by a token span.
    pub fn span_text(&self, span: &Span) -> String {
        let start = self.tokens[span.start].start;
        let end = self.tokens[span.end - 1].end;
        char_slice(&self.raw_text, start, end).to_string()
    }

    pub fn spans(&self, head: Head) -> &[Span] {
        match head {
            Head::Aspect => &self.aspect_spans,
            Head::Opinion => &self.opinion_spans,
        }
    }
}

/// Substring by character (not byte) offsets. Out-of-range bounds are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let byte = |c: usize| text.char_indices().nth(c).map(|(b, _)| b).unwrap_or(text.len());
    let (s, e) = (byte(start), byte(end.max(start)));
    &text[s..e]
}

/// Maximal runs of letters and digits form tokens; every other
/// non-whitespace character is a token on its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let flush = |current: &mut Option<(usize, String)>, end: usize, tokens: &mut Vec<Token>| {
        if let Some((start, word)) = current.take() {
            tokens.push(Token {
                text: word,
                start,
                end,
            });
        }
    };
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if c.is_alphanumeric() {
            match &mut current {
                Some((_, w)) => w.push(c),
                None => current = Some((i, c.to_string())),
            }
        } else {
            flush(&mut current, i, &mut tokens);
            if !c.is_whitespace() {
                tokens.push(Token {
                    text: c.to_string(),
                    start: i,
                    end: i + 1,
                });
            }
        }
    }
    flush(&mut current, n, &mut tokens);
    tokens
}

/// Maps character spans onto token spans: a token belongs to a span iff
/// their character ranges overlap. Spans that cover no token are returned as
/// messages instead.
pub fn align_spans(
    char_spans: &[(usize, usize)],
    tokens: &[Token],
    kind: Head,
) -> (Vec<Span>, Vec<String>) {
    let mut spans = Vec::new();
    let mut failures = Vec::new();
    for &(from, to) in char_spans {
        let mut covered = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.start < to && from < t.end)
            .map(|(i, _)| i);
        match covered.next() {
            Some(first) => {
                let last = covered.next_back().unwrap_or(first);
                spans.push(Span::new(first, last + 1, kind));
            }
            None => failures.push(format!("characters [{from}, {to}) cover no token")),
        }
    }
    (spans, failures)
}

/// Sorts and deduplicates spans; spans overlapping an earlier one are dropped
/// and reported.
fn normalize_spans(mut spans: Vec<Span>) -> (Vec<Span>, Vec<Span>) {
    spans.sort();
    spans.dedup();
    let mut kept: Vec<Span> = Vec::with_capacity(spans.len());
    let mut dropped = Vec::new();
    for s in spans {
        match kept.last() {
            Some(prev) if s.start < prev.end => dropped.push(s),
            _ => kept.push(s),
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub source_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub sentences: Vec<Sentence>,
    pub diagnostics: Vec<Diagnostic>,
    /// Sentences dropped because an annotation pointed outside their text.
    pub skipped: usize,
}

pub fn parse_semeval_xml(path: impl AsRef<Path>) -> Result<ParsedCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_semeval_str(&text, &path.display().to_string())
}

/// Parses the SemEval review schema
/// (`Reviews/Review/sentences/sentence/{text, Opinions/Opinion}`). The older
/// `aspectTerms/aspectTerm` layout is read as well.
pub fn parse_semeval_str(xml: &str, origin: &str) -> Result<ParsedCorpus> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::Xml {
        path: origin.to_string(),
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let mut corpus = ParsedCorpus::default();
    for node in doc.descendants().filter(|n| n.has_tag_name("sentence")) {
        let id = node.attribute("id").unwrap_or("").to_string();
        let text = node
            .children()
            .find(|c| c.has_tag_name("text"))
            .and_then(|t| t.text())
            .unwrap_or("")
            .to_string();
        let text_len = text.chars().count();
        let mut annotations = Vec::new();
        let mut bad_offsets = false;
        for ann in node
            .descendants()
            .filter(|c| c.has_tag_name("Opinion") || c.has_tag_name("aspectTerm"))
        {
            let target = ann.attribute("target").or_else(|| ann.attribute("term"));
            let line = doc.text_pos_at(ann.range().start).row;
            let offset = |name: &str| -> Result<usize> {
                match ann.attribute(name) {
                    None => Ok(0),
                    Some(v) => v.trim().parse().map_err(|_| Error::Parse {
                        path: origin.to_string(),
                        line: line as usize,
                        message: format!("attribute {name}={v:?} is not an offset"),
                    }),
                }
            };
            let (from, to) = (offset("from")?, offset("to")?);
            let target = target.filter(|t| *t != "NULL").map(str::to_string);
            if target.is_some() && (from > to || to > text_len) {
                corpus.diagnostics.push(Diagnostic {
                    source_id: id.clone(),
                    message: format!(
                        "line {line}: offsets [{from}, {to}) outside text of {text_len} characters"
                    ),
                });
                bad_offsets = true;
            }
            annotations.push(TargetAnnotation {
                target,
                category: ann.attribute("category").map(str::to_string),
                polarity: ann.attribute("polarity").map(str::to_string),
                from,
                to,
            });
        }
        if bad_offsets {
            corpus.skipped += 1;
            continue;
        }
        let tokens = tokenize(&text);
        let mut char_spans = Vec::new();
        for a in &annotations {
            let Some(target) = &a.target else { continue };
            let found = char_slice(&text, a.from, a.to);
            if found != target {
                corpus.diagnostics.push(Diagnostic {
                    source_id: id.clone(),
                    message: format!(
                        "target {target:?} does not match text {found:?} at [{}, {})",
                        a.from, a.to
                    ),
                });
                continue;
            }
            char_spans.push((a.from, a.to));
        }
        let (spans, failures) = align_spans(&char_spans, &tokens, Head::Aspect);
        corpus.diagnostics.extend(failures.into_iter().map(|m| Diagnostic {
            source_id: id.clone(),
            message: m,
        }));
        let (aspect_spans, dropped) = normalize_spans(spans);
        corpus.diagnostics.extend(dropped.into_iter().map(|s| Diagnostic {
            source_id: id.clone(),
            message: format!("aspect span [{}, {}) overlaps another and was dropped", s.start, s.end),
        }));
        corpus.sentences.push(Sentence {
            raw_text: text,
            tokens,
            aspect_spans,
            opinion_spans: Vec::new(),
            source_id: id,
            annotations,
        });
    }
    Ok(corpus)
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Writes sentences in the SemEval review schema. Aspect spans become
/// `Opinion` elements; sentences are grouped into reviews by the part of
/// their id before the first `:`.
pub fn to_semeval_xml(sentences: &[Sentence]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<Reviews>\n");
    let mut i = 0;
    while i < sentences.len() {
        let rid = review_id(&sentences[i].source_id);
        let _ = writeln!(out, "  <Review rid=\"{}\">\n    <sentences>", escape_xml(rid));
        while i < sentences.len() && review_id(&sentences[i].source_id) == rid {
            let s = &sentences[i];
            let _ = writeln!(out, "      <sentence id=\"{}\">", escape_xml(&s.source_id));
            let _ = writeln!(out, "        <text>{}</text>", escape_xml(&s.raw_text));
            if !s.aspect_spans.is_empty() {
                out.push_str("        <Opinions>\n");
                for span in &s.aspect_spans {
                    let from = s.tokens[span.start].start;
                    let to = s.tokens[span.end - 1].end;
                    let _ = writeln!(
                        out,
                        "          <Opinion target=\"{}\" category=\"\" polarity=\"\" from=\"{from}\" to=\"{to}\"/>",
                        escape_xml(&s.span_text(span))
                    );
                }
                out.push_str("        </Opinions>\n");
            }
            out.push_str("      </sentence>\n");
            i += 1;
        }
        out.push_str("    </sentences>\n  </Review>\n");
    }
    out.push_str("</Reviews>\n");
    out
}

fn review_id(source_id: &str) -> &str {
    source_id.split(':').next().unwrap_or(source_id)
}

/// Drops sentences whose id starts with any of `prefixes`.
pub fn exclude_sources(sentences: Vec<Sentence>, prefixes: &[String]) -> Vec<Sentence> {
    sentences
        .into_iter()
        .filter(|s| !prefixes.iter().any(|p| s.source_id.starts_with(p.as_str())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetStats {
    pub sentences: usize,
    pub tokens: usize,
    pub aspect_spans: usize,
    pub opinion_spans: usize,
    /// Sentences without any aspect span.
    pub without_aspect: usize,
}

impl DatasetStats {
    pub fn of(sentences: &[Sentence]) -> Self {
        let mut s = DatasetStats::default();
        for sent in sentences {
            s.sentences += 1;
            s.tokens += sent.tokens.len();
            s.aspect_spans += sent.aspect_spans.len();
            s.opinion_spans += sent.opinion_spans.len();
            if sent.aspect_spans.is_empty() {
                s.without_aspect += 1;
            }
        }
        s
    }
}

/// What a lookup returns for words missing from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovPolicy {
    ZeroVector,
    /// A fixed pseudo-random vector chosen by hashing the word into one of `n` buckets.
    HashBucket(usize),
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
    pub oov_policy: OovPolicy,
    /// Words seen more than once while loading (last occurrence wins).
    pub duplicates: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_policy: OovPolicy) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if let OovPolicy::HashBucket(0) = oov_policy {
            return Err(Error::invalid("hash bucket count must be positive"));
        }
        Ok(EmbeddingTable {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
            oov_policy,
            duplicates: 0,
        })
    }

    /// Inserts or replaces a vector; returns true when the word was new.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::shape(format!(
                "vector for {word:?} has {} values, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        match self.index.get(word) {
            Some(&i) => {
                self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
                Ok(false)
            }
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.vectors.extend_from_slice(vector);
                Ok(true)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Exact match, then lowercase.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        let i = self
            .index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))?;
        Some(&self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }

    /// Total lookup: known words return their vector, others follow the OOV policy.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.get(word) {
            return v.to_vec();
        }
        match self.oov_policy {
            OovPolicy::ZeroVector => vec![0.0; self.dim],
            OovPolicy::HashBucket(n) => {
                let bucket = fnv1a(word.to_lowercase().as_bytes()) % n as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(bucket);
                (0..self.dim).map(|_| rng.gen_range(-0.25..=0.25)).collect()
            }
        }
    }

    /// `n × dim` matrix of the sentence's token vectors.
    pub fn embed_sentence(&self, sentence: &Sentence) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = sentence.tokens.iter().map(|t| self.lookup(&t.text)).collect();
        Tensor::from_rows(&rows)
    }

    pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    /// The `k` table words most cosine-similar to `query`, best first. Ties
    /// keep table order.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<(String, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.words.len())
            .map(|i| (i, Self::cosine(query, &self.vectors[i * self.dim..(i + 1) * self.dim])))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, c)| (self.words[i].clone(), c))
            .collect()
    }

    /// Reads the text format: a `vocab_size dim` header, then one word and
    /// `dim` numbers per line.
    pub fn read_text<R: Read>(reader: R, origin: &str, oov_policy: OovPolicy) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = BufReader::new(reader).lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| perr(1, "empty embedding file".into()))?;
        let header = header.map_err(|e| perr(1, e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (vocab, dim) = match fields.as_slice() {
            [v, d] => match (parse_usize(v), parse_usize(d)) {
                (Some(v), Some(d)) if d > 0 => (v, d),
                _ => return Err(perr(1, format!("bad header {header:?}"))),
            },
            _ => return Err(perr(1, format!("header must be \"vocab_size dim\", got {header:?}"))),
        };
        let mut table = EmbeddingTable::new(dim, oov_policy)?;
        let mut rows = 0;
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| perr(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("nonempty line");
            let values = parts
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| perr(lineno, format!("value {v:?} for {word:?} is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(perr(
                    lineno,
                    format!("{word:?} has {} values, expected {dim}", values.len()),
                ));
            }
            if !table.insert(word, &values)? {
                table.duplicates += 1;
            }
            rows += 1;
        }
        if rows != vocab {
            return Err(perr(1, format!("header announces {vocab} words, file has {rows}")));
        }
        Ok(table)
    }

    /// Same format as [`EmbeddingTable::read_text`]; values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, oov_policy: OovPolicy) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::read_text(file, &path.display().to_string(), oov_policy)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A fixed list of opinion words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpinionLexicon {
    entries: BTreeSet<String>,
}

impl OpinionLexicon {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut entries = BTreeSet::new();
        for w in words {
            let w = w.as_ref().trim();
            if w.is_empty() {
                continue;
            }
            if w.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("lexicon entry {w:?} contains whitespace")));
            }
            entries.insert(w.to_lowercase());
        }
        if entries.is_empty() {
            return Err(Error::invalid("opinion lexicon is empty"));
        }
        Ok(OpinionLexicon { entries })
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|w| format!("{w}\n")).collect()
    }
}

/// Marks every lexicon word as a one-token opinion span, keeping existing
/// opinion spans. A lexicon hit inside an existing span is not added twice.
pub fn annotate_opinions(sentences: &mut [Sentence], lexicon: &OpinionLexicon) {
    for s in sentences {
        let mut spans = s.opinion_spans.clone();
        for (i, t) in s.tokens.iter().enumerate() {
            let inside = spans.iter().any(|sp| sp.start <= i && i < sp.end);
            if !inside && lexicon.contains(&t.text) {
                spans.push(Span::new(i, i + 1, Head::Opinion));
            }
        }
        spans.sort();
        spans.dedup();
        s.opinion_spans = spans;
    }
}

/// Configuration of the synthetic corpus generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_sentences: usize,
    pub seed: u64,
    pub dim: usize,
    /// Templates with `ASPECT` and `OPINION` slots.
    pub templates: Vec<String>,
    /// Aspect phrases; may contain several words.
    pub aspects: Vec<String>,
    /// Single-word opinion terms.
    pub opinions: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        SynthConfig {
            n_sentences: 20,
            seed: 42,
            dim: 16,
            templates: s(&[
                "the ASPECT was OPINION .",
                "we had OPINION ASPECT tonight",
                "i think the ASPECT is OPINION here",
                "OPINION ASPECT , we will come back",
                "honestly the ASPECT tasted OPINION",
            ]),
            aspects: s(&[
                "food", "service", "pasta", "wine list", "terrace", "staff", "pizza", "dessert",
                "location", "fish soup",
            ]),
            opinions: s(&[
                "great", "bad", "delicious", "awful", "excellent", "slow", "friendly", "cold",
                "amazing", "terrible",
            ]),
        }
    }
}

const SYNTH_KEYS: [&str; 6] = ["n_sentences", "seed", "dim", "templates", "aspects", "opinions"];

impl SynthConfig {
    /// Flat `key = value` text. List values are separated by `|`.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = SynthConfig::default();
        for (lineno, (key, value)) in parse_key_values(text, origin)? {
            let perr = |m: String| Error::Parse {
                path: origin.to_string(),
                line: lineno,
                message: m,
            };
            let list = || -> Vec<String> {
                value
                    .split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            };
            match key.as_str() {
                "n_sentences" => cfg.n_sentences = value.parse().map_err(|_| perr(format!("bad n_sentences {value:?}")))?,
                "seed" => cfg.seed = value.parse().map_err(|_| perr(format!("bad seed {value:?}")))?,
                "dim" => cfg.dim = value.parse().map_err(|_| perr(format!("bad dim {value:?}")))?,
                "templates" => cfg.templates = list(),
                "aspects" => cfg.aspects = list(),
                "opinions" => cfg.opinions = list(),
                other => {
                    return Err(perr(format!(
                        "unknown key {other:?} (expected one of {})",
                        SYNTH_KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("synthetic embedding dimension must be positive"));
        }
        if self.aspects.is_empty() || self.opinions.is_empty() || self.templates.is_empty() {
            return Err(Error::invalid("templates, aspects and opinions must be nonempty"));
        }
        for t in &self.templates {
            if !t.contains("ASPECT") || !t.contains("OPINION") {
                return Err(Error::invalid(format!(
                    "template {t:?} needs both ASPECT and OPINION slots"
                )));
            }
        }
        for o in &self.opinions {
            if tokenize(o).len() != 1 {
                return Err(Error::invalid(format!("opinion term {o:?} must be a single token")));
            }
        }
        Ok(())
    }
}

/// Parses `key = value` lines (blank lines and `#` comments skipped) into
/// `(line number, (key, value))` pairs.
pub fn parse_key_values(text: &str, origin: &str) -> Result<Vec<(usize, (String, String))>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        out.push((i + 1, (k.trim().to_string(), v.trim().to_string())));
    }
    Ok(out)
}

/// A synthetic corpus, its embeddings and the lexicon of its opinion words.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub sentences: Vec<Sentence>,
    pub embeddings: EmbeddingTable,
    pub lexicon: OpinionLexicon,
}

/// Fills templates with aspect and opinion terms drawn from a seeded
/// generator. Every vocabulary word gets its own random embedding.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sentences = Vec::with_capacity(config.n_sentences);
    for i in 0..config.n_sentences {
        let template = &config.templates[rng.gen_range(0..config.templates.len())];
        let aspect = &config.aspects[rng.gen_range(0..config.aspects.len())];
        let opinion = &config.opinions[rng.gen_range(0..config.opinions.len())];
        sentences.push(fill_template(&format!("synth:{i}"), template, aspect, opinion)?);
    }

    let mut vocab = BTreeSet::new();
    for text in config.templates.iter().chain(&config.aspects).chain(&config.opinions) {
        for t in tokenize(&text.replace("ASPECT", " ").replace("OPINION", " ")) {
            vocab.insert(t.text.to_lowercase());
        }
    }
    let mut embeddings = EmbeddingTable::new(config.dim, OovPolicy::ZeroVector)?;
    for word in &vocab {
        let v: Vec<f64> = (0..config.dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        embeddings.insert(word, &v)?;
    }
    let lexicon = OpinionLexicon::new(&config.opinions)?;
    Ok(SyntheticCorpus {
        sentences,
        embeddings,
        lexicon,
    })
}

fn fill_template(id: &str, template: &str, aspect: &str, opinion: &str) -> Result<Sentence> {
    let mut text = String::new();
    let mut aspect_chars = Vec::new();
    let mut opinion_chars = Vec::new();
    let mut rest = template;
    loop {
        let next = [("ASPECT", aspect), ("OPINION", opinion)]
            .into_iter()
            .filter_map(|(slot, fill)| rest.find(slot).map(|p| (p, slot, fill)))
            .min_by_key(|(p, _, _)| *p);
        let Some((pos, slot, fill)) = next else {
            text.push_str(rest);
            break;
        };
        text.push_str(&rest[..pos]);
        let start = text.chars().count();
        text.push_str(fill);
        let span = (start, start + fill.chars().count());
        if slot == "ASPECT" {
            aspect_chars.push(span);
        } else {
            opinion_chars.push(span);
        }
        rest = &rest[pos + slot.len()..];
    }
    let tokens = tokenize(&text);
    let (aspect_spans, fa) = align_spans(&aspect_chars, &tokens, Head::Aspect);
    let (opinion_spans, fo) = align_spans(&opinion_chars, &tokens, Head::Opinion);
    if let Some(m) = fa.into_iter().chain(fo).next() {
        return Err(Error::invalid(format!("template {template:?}: {m}")));
    }
    let (aspect_spans, _) = normalize_spans(aspect_spans);
    let (opinion_spans, _) = normalize_spans(opinion_spans);
    let annotations = aspect_chars
        .iter()
        .map(|&(from, to)| TargetAnnotation {
            target: Some(char_slice(&text, from, to).to_string()),
            category: None,
            polarity: None,
            from,
            to,
        })
        .collect();
    Ok(Sentence {
        raw_text: text,
        tokens,
        aspect_spans,
        opinion_spans,
        source_id: id.to_string(),
        annotations,
    })
}
