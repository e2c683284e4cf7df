//! Command-line driver: `synth`, `train`, `eval`, `predict` and `inspect`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Diagnostics go to the error stream; every artifact is written inside the
//! command's `--out` directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::data::{
    self, annotate_opinions, exclude_sources, generate_synthetic, load_embeddings, parse_key_values,
    parse_semeval_xml, DatasetStats, EmbeddingTable, OovPolicy, OpinionLexicon, Sentence, SynthConfig,
};
use crate::error::Error;
use crate::eval::{attention_report, attention_tsv, score_corpus, score_sentences, CorpusReport};
use crate::model::{train_with, CmlaParams, Example, ModelConfig, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cmla", about = "Joint aspect and opinion term extraction with coupled attentions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, its embeddings and opinion lexicon.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus loss trace.
    Train(TrainArgs),
    /// Score a model (or a prediction file) against gold annotations.
    Eval(EvalArgs),
    /// Tag sentences and print spans with per-token attention.
    Predict(PredictArgs),
    /// Report coverage, norms and nearest neighbours for query words.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Flat key = value generator configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_sentences: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct CorpusArgs {
    /// SemEval-format XML with gold aspect targets.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Opinion word list, one word per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Drop sentences whose id starts with this prefix (repeatable).
    #[arg(long = "exclude-source")]
    pub exclude_source: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `zero` or `hash:N`.
    #[arg(long)]
    pub oov: Option<String>,
    /// Flat key = value file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub oov: Option<String>,
    /// Score this annotated file instead of running a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub oov: Option<String>,
    /// One sentence per line, or SemEval XML (`.xml`); `-` or absent reads stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Marks gold opinion words in the attention report.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Directory for `predictions.txt`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Query words; comma-separated values are split.
    #[arg(long, value_delimiter = ',')]
    pub words: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub top: usize,
}

/// Model and optimiser settings after merging defaults, config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub exclude_source: Vec<String>,
    pub oov: OovPolicy,
    pub d: usize,
    pub k: usize,
    pub layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub clip: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            embeddings: None,
            lexicon: None,
            out: None,
            exclude_source: Vec::new(),
            oov: OovPolicy::ZeroVector,
            d: 200,
            k: 20,
            layers: 2,
            lr: 0.07,
            epochs: 50,
            clip: 5.0,
            seed: 42,
        }
    }
}

pub const RUN_CONFIG_KEYS: [&str; 13] = [
    "data", "embeddings", "lexicon", "out", "exclude_source", "oov", "d", "k", "layers", "lr",
    "epochs", "clip", "seed",
];

impl RunConfig {
    /// Applies a flat `key = value` file on top of the current values.
    pub fn apply_file(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let base = Path::new(origin).parent().unwrap_or(Path::new(""));
        for (line, (key, value)) in parse_key_values(text, origin).map_err(CliError::usage)? {
            let bad = |what: &str| CliError::Usage(format!("{origin}:{line}: invalid {what} {value:?}"));
            let path = || Some(base.join(&value));
            match key.as_str() {
                "data" => self.data = path(),
                "embeddings" => self.embeddings = path(),
                "lexicon" => self.lexicon = path(),
                "out" => self.out = path(),
                "exclude_source" => self.exclude_source.push(value.clone()),
                "oov" => self.oov = parse_oov(&value).map_err(|_| bad("oov"))?,
                "d" => self.d = value.parse().map_err(|_| bad("d"))?,
                "k" => self.k = value.parse().map_err(|_| bad("k"))?,
                "layers" => self.layers = value.parse().map_err(|_| bad("layers"))?,
                "lr" => self.lr = value.parse().map_err(|_| bad("lr"))?,
                "epochs" => self.epochs = value.parse().map_err(|_| bad("epochs"))?,
                "clip" => self.clip = value.parse().map_err(|_| bad("clip"))?,
                "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
                other => {
                    return Err(CliError::Usage(format!(
                        "{origin}:{line}: unknown key {other:?} (known: {})",
                        RUN_CONFIG_KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(())
    }

    fn from_train_args(args: &TrainArgs) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &args.config {
            let text = read_text(path)?;
            cfg.apply_file(&text, &path.display().to_string())?;
        }
        macro_rules! flag {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    cfg.$field = v;
                }
            };
        }
        flag!(d, args.d);
        flag!(k, args.k);
        flag!(layers, args.layers);
        flag!(lr, args.lr);
        flag!(epochs, args.epochs);
        flag!(clip, args.clip);
        flag!(seed, args.seed);
        if let Some(p) = &args.corpus.data {
            cfg.data = Some(p.clone());
        }
        if let Some(p) = &args.corpus.lexicon {
            cfg.lexicon = Some(p.clone());
        }
        if let Some(p) = &args.embeddings {
            cfg.embeddings = Some(p.clone());
        }
        if let Some(p) = &args.out {
            cfg.out = Some(p.clone());
        }
        if let Some(o) = &args.oov {
            cfg.oov = parse_oov(o)?;
        }
        cfg.exclude_source.extend(args.corpus.exclude_source.iter().cloned());
        Ok(cfg)
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Numeric(Error),
}

impl CliError {
    fn usage(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Numeric(e) => write!(f, "numeric failure: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericFailure { .. } => CliError::Numeric(e),
            other => CliError::Data(other),
        }
    }
}

pub fn parse_oov(s: &str) -> Result<OovPolicy, CliError> {
    match s {
        "zero" => Ok(OovPolicy::ZeroVector),
        _ => s
            .strip_prefix("hash:")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .map(OovPolicy::HashBucket)
            .ok_or_else(|| CliError::Usage(format!("--oov must be `zero` or `hash:N`, got {s:?}"))),
    }
}

/// Runs against the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_with(args, &mut input, &mut out, &mut err)
}

pub fn run_with<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, stderr),
        Command::Train(a) => cmd_train(a, stderr),
        Command::Eval(a) => cmd_eval(a, stdout, stderr),
        Command::Predict(a) => cmd_predict(a, stdin, stdout, stderr),
        Command::Inspect(a) => cmd_inspect(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf, CliError> {
    p.as_ref().ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Data(Error::io(path, e)))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(Error::io(path, e)))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parses a corpus, applies the source filter and lexicon.
fn load_corpus(
    data: &Path,
    lexicon: Option<&Path>,
    exclude: &[String],
    stderr: &mut dyn Write,
) -> Result<Vec<Sentence>, CliError> {
    let parsed = parse_semeval_xml(data)?;
    for d in &parsed.diagnostics {
        let _ = writeln!(stderr, "warning: {}: sentence {}: {}", data.display(), d.source_id, d.message);
    }
    if parsed.skipped > 0 {
        let _ = writeln!(stderr, "warning: skipped {} sentence(s) with invalid offsets", parsed.skipped);
    }
    let before = parsed.sentences.len();
    let mut sentences = exclude_sources(parsed.sentences, exclude);
    if sentences.len() != before {
        let _ = writeln!(stderr, "excluded {} sentence(s) by source", before - sentences.len());
    }
    if let Some(lex) = lexicon {
        let lexicon = OpinionLexicon::load(lex)?;
        annotate_opinions(&mut sentences, &lexicon);
    }
    Ok(sentences)
}

fn cmd_synth(args: &SynthArgs, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            SynthConfig::parse(&read_text(path)?, &path.display().to_string()).map_err(CliError::usage)?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = args.n_sentences {
        cfg.n_sentences = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.dim {
        cfg.dim = d;
    }
    cfg.validate().map_err(CliError::usage)?;
    let corpus = generate_synthetic(&cfg)?;
    ensure_dir(&args.out)?;
    write_file(&args.out.join("corpus.xml"), &data::to_semeval_xml(&corpus.sentences))?;
    write_file(&args.out.join("embeddings.txt"), &corpus.embeddings.to_text())?;
    write_file(&args.out.join("lexicon.txt"), &corpus.lexicon.to_text())?;
    let stats = DatasetStats::of(&corpus.sentences);
    let _ = writeln!(
        stderr,
        "wrote {} sentences ({} aspect, {} opinion spans) to {}",
        stats.sentences,
        stats.aspect_spans,
        stats.opinion_spans,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, stderr: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_train_args(args)?;
    let data = require(&cfg.data, "data")?;
    let emb_path = require(&cfg.embeddings, "embeddings")?;
    let out = require(&cfg.out, "out")?;
    require_file(data, "data file")?;
    require_file(emb_path, "embedding file")?;
    if let Some(l) = &cfg.lexicon {
        require_file(l, "lexicon")?;
    } else {
        let _ = writeln!(stderr, "warning: no --lexicon; opinion head trains on all-O targets");
    }

    let sentences = load_corpus(data, cfg.lexicon.as_deref(), &cfg.exclude_source, stderr)?;
    let embeddings = load_embeddings(emb_path, cfg.oov)?;
    let examples = Example::batch(&sentences, &embeddings)?;
    if examples.is_empty() {
        return Err(CliError::Data(Error::invalid("no training sentences")));
    }
    let stats = DatasetStats::of(&sentences);
    let _ = writeln!(
        stderr,
        "training on {} sentences ({} aspect, {} opinion spans), {} epochs",
        stats.sentences, stats.aspect_spans, stats.opinion_spans, cfg.epochs
    );
    let model_cfg = ModelConfig {
        embed_dim: embeddings.dim(),
        hidden_dim: cfg.d,
        slices: cfg.k,
        layers: cfg.layers,
    };
    let params = CmlaParams::init(model_cfg, cfg.seed).map_err(CliError::usage)?;
    let train_cfg = TrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        seed: cfg.seed,
        clip: cfg.clip,
    };
    let outcome = train_with(&examples, params, &train_cfg, |epoch, loss, _| {
        let _ = writeln!(stderr, "epoch {:>4}  loss {loss:.6}", epoch + 1);
        std::ops::ControlFlow::Continue(())
    })
    .map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::from(other),
    })?;

    ensure_dir(out)?;
    checkpoint::save(&outcome.params, out.join("checkpoint.json"))?;
    let mut trace = String::from("epoch\tloss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        let _ = writeln!(trace, "{}\t{l:?}", i + 1);
    }
    write_file(&out.join("loss_trace.tsv"), &trace)?;
    let _ = writeln!(stderr, "wrote {}", out.join("checkpoint.json").display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let data = require(&args.corpus.data, "data")?;
    require_file(data, "data file")?;
    if let Some(l) = &args.corpus.lexicon {
        require_file(l, "lexicon")?;
    }
    let lexicon = args.corpus.lexicon.as_deref();
    let exclude = &args.corpus.exclude_source;
    let report: CorpusReport = if let Some(pred_path) = &args.predictions {
        require_file(pred_path, "predictions file")?;
        let gold = load_corpus(data, lexicon, exclude, stderr)?;
        let pred = load_corpus(pred_path, lexicon, exclude, stderr)?;
        let ids = |s: &[Sentence]| s.iter().map(|x| x.source_id.clone()).collect::<Vec<_>>();
        if ids(&gold) != ids(&pred) {
            return Err(CliError::Data(Error::invalid(
                "prediction file does not cover the same sentences as the gold file",
            )));
        }
        score_sentences(&gold, &pred)?
    } else {
        let ck = args
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Usage("eval needs --checkpoint or --predictions".into()))?;
        let emb = require(&args.embeddings, "embeddings")?;
        require_file(ck, "checkpoint")?;
        require_file(emb, "embedding file")?;
        let oov = args.oov.as_deref().map(parse_oov).transpose()?.unwrap_or(OovPolicy::ZeroVector);
        let gold = load_corpus(data, lexicon, exclude, stderr)?;
        let params = checkpoint::load(ck)?;
        let embeddings = load_embeddings(emb, oov)?;
        check_embedding_dim(&params, &embeddings)?;
        score_corpus(&params, &gold, &embeddings)?.0
    };
    let table = report.to_table();
    let _ = write!(stdout, "{table}");
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        write_file(&out.join("metrics.tsv"), &report.to_tsv())?;
        write_file(&out.join("metrics.txt"), &table)?;
    }
    Ok(())
}

fn check_embedding_dim(params: &CmlaParams, embeddings: &EmbeddingTable) -> Result<(), CliError> {
    if params.config.embed_dim != embeddings.dim() {
        return Err(CliError::Data(Error::shape(format!(
            "checkpoint expects {}-dimensional embeddings, file has {}",
            params.config.embed_dim,
            embeddings.dim()
        ))));
    }
    Ok(())
}

fn cmd_predict(
    args: &PredictArgs,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.embeddings, "embedding file")?;
    if let Some(l) = &args.lexicon {
        require_file(l, "lexicon")?;
    }
    let input = args.input.as_ref().filter(|p| p.as_os_str() != "-");
    if let Some(p) = input {
        require_file(p, "input")?;
    }
    let oov = args.oov.as_deref().map(parse_oov).transpose()?.unwrap_or(OovPolicy::ZeroVector);
    let params = checkpoint::load(&args.checkpoint)?;
    let embeddings = load_embeddings(&args.embeddings, oov)?;
    check_embedding_dim(&params, &embeddings)?;

    let mut sentences = match input {
        Some(p) if p.extension().is_some_and(|e| e == "xml") => load_corpus(p, None, &[], stderr)?,
        Some(p) => lines_to_sentences(&read_text(p)?),
        None => {
            let mut text = String::new();
            stdin
                .read_to_string(&mut text)
                .map_err(|e| CliError::Data(Error::io("<stdin>", e)))?;
            lines_to_sentences(&text)
        }
    };
    if let Some(l) = &args.lexicon {
        annotate_opinions(&mut sentences, &OpinionLexicon::load(l)?);
    }

    let mut report = String::new();
    for (i, s) in sentences.iter().enumerate() {
        let pred = params.predict(s, &embeddings)?;
        let join = |spans: &[crate::bio::Span]| {
            spans.iter().map(|sp| s.span_text(sp)).collect::<Vec<_>>().join(" | ")
        };
        let _ = writeln!(report, "# sentence {}: {}", i + 1, s.raw_text);
        let _ = writeln!(report, "aspects: {}", join(&pred.aspect_spans));
        let _ = writeln!(report, "opinions: {}", join(&pred.opinion_spans));
        let merged: Vec<&str> = pred.merged.iter().map(|t| t.as_str()).collect();
        let _ = writeln!(report, "merged: {}", merged.join(" "));
        if !s.tokens.is_empty() {
            report.push_str(&attention_tsv(&attention_report(s, &pred)?));
        }
        report.push('\n');
    }
    match &args.out {
        Some(out) => {
            ensure_dir(out)?;
            write_file(&out.join("predictions.txt"), &report)?;
        }
        None => {
            let _ = write!(stdout, "{report}");
        }
    }
    Ok(())
}

fn lines_to_sentences(text: &str) -> Vec<Sentence> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| Sentence::from_text(format!("input:{i}"), l))
        .collect()
}

/// Per-word summary produced by [`inspect_embeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct WordReport {
    pub word: String,
    pub found: bool,
    pub norm: f64,
    pub neighbors: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectReport {
    pub dim: usize,
    pub vocab: usize,
    /// Percentage of query words present in the table.
    pub coverage: f64,
    pub words: Vec<WordReport>,
}

pub fn inspect_embeddings(table: &EmbeddingTable, words: &[String], top: usize) -> InspectReport {
    let reports: Vec<WordReport> = words
        .iter()
        .map(|w| match table.get(w) {
            Some(v) => WordReport {
                word: w.clone(),
                found: true,
                norm: v.iter().map(|x| x * x).sum::<f64>().sqrt(),
                neighbors: table.nearest(v, top),
            },
            None => WordReport {
                word: w.clone(),
                found: false,
                norm: 0.0,
                neighbors: Vec::new(),
            },
        })
        .collect();
    let found = reports.iter().filter(|r| r.found).count();
    InspectReport {
        dim: table.dim(),
        vocab: table.len(),
        coverage: if words.is_empty() { 0.0 } else { 100.0 * found as f64 / words.len() as f64 },
        words: reports,
    }
}

impl std::fmt::Display for InspectReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "vocabulary: {}  dimension: {}  coverage: {:.2}%", self.vocab, self.dim, self.coverage)?;
        for w in &self.words {
            if !w.found {
                writeln!(f, "{}: OOV", w.word)?;
                continue;
            }
            writeln!(f, "{}: norm {:.6}", w.word, w.norm)?;
            for (n, c) in &w.neighbors {
                writeln!(f, "  {n}\t{c:.6}")?;
            }
        }
        Ok(())
    }
}

fn cmd_inspect(args: &InspectArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    require_file(&args.embeddings, "embedding file")?;
    let table = load_embeddings(&args.embeddings, OovPolicy::ZeroVector)?;
    let report = inspect_embeddings(&table, &args.words, args.top);
    let _ = write!(stdout, "{report}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::read_text(
            "4 2\nking 1 0.1\nqueen 0.9 0.2\napple -0.2 1\nzero 0 0\n".as_bytes(),
            "t",
            OovPolicy::ZeroVector,
        )
        .unwrap()
    }

    #[test]
    fn inspect_present_and_oov() {
        let t = table();
        let r = inspect_embeddings(&t, &["king".into(), "pear".into()], 5);
        assert_eq!(r.coverage, 50.0);
        let king = &r.words[0];
        assert_eq!(king.neighbors[0].0, "king");
        assert!((king.neighbors[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(king.neighbors[1].0, "queen");
        assert!(!r.words[1].found);
        assert!(r.words[1].neighbors.is_empty());
        assert!(r.to_string().contains("pear: OOV"));
    }

    #[test]
    fn cosine_matches_direct_formula() {
        let t = table();
        let r = inspect_embeddings(&t, &["queen".into()], 4);
        let q = t.get("queen").unwrap();
        for (w, c) in &r.words[0].neighbors {
            let v = t.get(w).unwrap();
            let dot = q[0] * v[0] + q[1] * v[1];
            let nq = (q[0] * q[0] + q[1] * q[1]).sqrt();
            let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let expected = if nv == 0.0 { 0.0 } else { dot / (nq * nv) };
            assert!((c - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn oov_flag_parsing() {
        assert_eq!(parse_oov("zero").unwrap(), OovPolicy::ZeroVector);
        assert_eq!(parse_oov("hash:64").unwrap(), OovPolicy::HashBucket(64));
        assert!(parse_oov("hash:0").is_err());
        assert!(parse_oov("random").is_err());
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let mut cfg = RunConfig::default();
        cfg.apply_file("lr = 0.1\nepochs = 3\n", "/tmp/x.cfg").unwrap();
        assert_eq!((cfg.lr, cfg.epochs), (0.1, 3));
        assert!(cfg.apply_file("learning_rate = 0.1\n", "x").is_err());
        assert!(cfg.apply_file("lr = fast\n", "x").is_err());
    }
}
