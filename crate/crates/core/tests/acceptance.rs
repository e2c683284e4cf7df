//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmla::bio::{labels_to_spans, spans_to_labels};
use cmla::data::{generate_synthetic, load_embeddings, parse_semeval_xml, OovPolicy};
use cmla::eval::{score_chunks, score_corpus};
use cmla::model::{loss_graph, train_with};
use cmla::tensor::{grad_check, init_uniform};
use cmla::{CmlaParams, Error, Example, Head, LabelSeq, ModelConfig, Span, SynthConfig, Tag, TrainConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_labels(n: usize, head: Head, rng: &mut ChaCha8Rng) -> LabelSeq {
    let tags = (0..n).map(|_| Tag::from_index(rng.gen_range(0..3)).unwrap()).collect();
    LabelSeq::new(tags, head).repaired()
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for trial in 0..6 {
        let config = ModelConfig {
            embed_dim: rng.gen_range(2..=8),
            hidden_dim: rng.gen_range(2..=8),
            slices: rng.gen_range(1..=4),
            layers: rng.gen_range(1..=3),
        };
        let n = rng.gen_range(2..=6);
        let params = CmlaParams::init(config, 100 + trial).map_err(|e| e.to_string())?;
        let emb = init_uniform(&[n, config.embed_dim], -1.0, 1.0, 200 + trial).unwrap();
        let gold_a = random_labels(n, Head::Aspect, &mut rng);
        let gold_p = random_labels(n, Head::Opinion, &mut rng);
        let tensors: Vec<_> = params.tensors().into_iter().cloned().collect();
        let report = grad_check(
            |g, vars| {
                let cv = params.vars_from(vars);
                let x = g.constant(emb.clone());
                let out = cv.forward(g, x)?;
                loss_graph(g, out.logits_a, out.logits_p, &gold_a, &gold_p)
            },
            &tensors,
            1e-5,
            40,
            trial,
        )
        .map_err(|e| e.to_string())?;
        ensure(report.max_rel_error < 1e-4, || format!("{config:?}, n={n}: {report:?}"))?;
        worst = worst.max(report.max_rel_error);
        coords += report.coordinates;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("6 configs, {coords} coordinates, max rel err {worst:.2e}, {:.1}s", elapsed.as_secs_f64()))
}

fn overfit_synthetic() -> Outcome {
    let start = Instant::now();
    let corpus = generate_synthetic(&SynthConfig::default()).map_err(|e| e.to_string())?;
    ensure(corpus.sentences.len() == 20, || "expected 20 sentences".into())?;
    let examples = Example::batch(&corpus.sentences, &corpus.embeddings).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        embed_dim: corpus.embeddings.dim(),
        hidden_dim: 16,
        slices: 4,
        layers: 2,
    };
    let train = TrainConfig {
        lr: 0.07,
        epochs: 500,
        seed: 42,
        clip: 5.0,
    };
    let params = CmlaParams::init(config, train.seed).map_err(|e| e.to_string())?;
    let mut reached = None;
    let outcome = train_with(&examples, params, &train, |epoch, _, p| {
        if (epoch + 1) % 10 != 0 {
            return ControlFlow::Continue(());
        }
        let (r, _) = score_corpus(p, &corpus.sentences, &corpus.embeddings).expect("scoring");
        if r.aspect.f1 >= 95.0 && r.opinion.f1 >= 95.0 {
            reached = Some(epoch + 1);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .map_err(|e| e.to_string())?;
    let (r, _) = score_corpus(&outcome.params, &corpus.sentences, &corpus.embeddings).map_err(|e| e.to_string())?;
    ensure(r.aspect.f1 >= 95.0 && r.opinion.f1 >= 95.0, || {
        format!("aspect F1 {:.2}, opinion F1 {:.2} after 500 epochs", r.aspect.f1, r.opinion.f1)
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "aspect F1 {:.2}, opinion F1 {:.2} at epoch {}, {:.1}s",
        r.aspect.f1,
        r.opinion.f1,
        reached.unwrap_or(500),
        elapsed.as_secs_f64()
    ))
}

/// Counts well-formed sequences: no I at the start or after an O.
fn well_formed_count(n: usize) -> usize {
    // states: last tag was O (or start), last tag was B or I
    let (mut outside, mut inside) = (1usize, 0usize);
    for _ in 0..n {
        let o = outside + inside;
        let bi = (outside + inside) + inside;
        outside = o;
        inside = bi;
    }
    outside + inside
}

fn bio_roundtrip() -> Outcome {
    let mut exhaustive = 0;
    for n in 0..=10usize {
        let mut seen = 0;
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let tags: Vec<Tag> = (0..n)
                .map(|_| {
                    let t = Tag::from_index(c % 3).unwrap();
                    c /= 3;
                    t
                })
                .collect();
            let labels = LabelSeq::new(tags, Head::Aspect);
            if !labels.is_well_formed() {
                continue;
            }
            seen += 1;
            let spans = labels_to_spans(&labels);
            let back = spans_to_labels(n, &spans, Head::Aspect).map_err(|e| e.to_string())?;
            ensure(back == labels, || format!("{} -> {spans:?} -> {}", labels.to_string_tags(), back.to_string_tags()))?;
        }
        ensure(seen == well_formed_count(n), || format!("length {n}: {seen} well-formed sequences"))?;
        exhaustive += seen;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let n = rng.gen_range(0..40);
        let mut spans = Vec::new();
        let mut i = 0;
        while i < n {
            if rng.gen_bool(0.3) {
                let end = rng.gen_range(i + 1..=n.min(i + 4));
                spans.push(Span::new(i, end, Head::Opinion));
                i = end + rng.gen_range(0..2);
            } else {
                i += 1;
            }
        }
        let labels = spans_to_labels(n, &spans, Head::Opinion).map_err(|e| e.to_string())?;
        ensure(labels.is_well_formed(), || format!("{spans:?} produced malformed labels"))?;
        ensure(labels_to_spans(&labels) == spans, || format!("{spans:?} did not round-trip"))?;
    }
    Ok(format!("{exhaustive} exhaustive sequences and 10000 random span sets, 0 failures"))
}

/// Pairwise comparison over deduplicated spans, sentence by sentence.
fn brute_force_counts(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let g: BTreeSet<_> = g.iter().collect();
        let p: BTreeSet<_> = p.iter().collect();
        for s in &p {
            if g.iter().any(|x| x == s) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        fn_ += g.iter().filter(|x| !p.contains(*x)).count();
    }
    (tp, fp, fn_)
}

fn random_span_set(rng: &mut ChaCha8Rng) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < 12 {
        if rng.gen_bool(0.35) {
            let end = rng.gen_range(i + 1..=(i + 3).min(12));
            spans.push(Span::new(i, end, Head::Aspect));
            i = end;
        }
        i += 1;
    }
    spans
}

fn scorer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m = rng.gen_range(0..6);
        let gold: Vec<Vec<Span>> = (0..m).map(|_| random_span_set(&mut rng)).collect();
        let pred: Vec<Vec<Span>> = gold
            .iter()
            .map(|g| if rng.gen_bool(0.3) { g.clone() } else { random_span_set(&mut rng) })
            .collect();
        let got = score_chunks(&gold, &pred).map_err(|e| e.to_string())?;
        let (tp, fp, fn_) = brute_force_counts(&gold, &pred);
        ensure((got.tp, got.fp, got.fn_) == (tp, fp, fn_), || {
            format!("scorer {:?} vs oracle {:?}", (got.tp, got.fp, got.fn_), (tp, fp, fn_))
        })?;
        let p = if tp + fp == 0 { 0.0 } else { 100.0 * tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { 100.0 * tp as f64 / (tp + fn_) as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        ensure(
            (got.precision - p).abs() < 1e-9 && (got.recall - r).abs() < 1e-9 && (got.f1 - f).abs() < 1e-9,
            || format!("{got:?} vs P={p} R={r} F1={f}"),
        )?;
    }
    let gold: Vec<Vec<Span>> = (0..50).map(|_| random_span_set(&mut rng)).filter(|s| !s.is_empty()).collect();
    let id = score_chunks(&gold, &gold).map_err(|e| e.to_string())?;
    ensure(id.precision == 100.0 && id.recall == 100.0 && id.f1 == 100.0, || format!("identity: {id:?}"))?;
    let empty = vec![Vec::new(); gold.len()];
    let none = score_chunks(&gold, &empty).map_err(|e| e.to_string())?;
    ensure(none.precision == 0.0 && none.recall == 0.0 && none.f1 == 0.0, || format!("empty: {none:?}"))?;
    Ok("1000 fuzzed pairs agree exactly; identity 100.00, empty 0.00".into())
}

fn attention_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for trial in 0..1000u64 {
        let config = ModelConfig {
            embed_dim: rng.gen_range(1..=10),
            hidden_dim: rng.gen_range(1..=10),
            slices: rng.gen_range(1..=5),
            layers: rng.gen_range(1..=3),
        };
        let n = rng.gen_range(1..=25);
        let scale = [0.1, 1.0, 10.0, 100.0][rng.gen_range(0..4)];
        let params = CmlaParams::init(config, trial).map_err(|e| e.to_string())?;
        let emb = init_uniform(&[n, config.embed_dim], -scale, scale, 10_000 + trial).unwrap();
        let out = params.forward(&emb).map_err(|e| e.to_string())?;
        for column in [&out.attention_a, &out.attention_p] {
            ensure(column.len() == n, || format!("{} scores for {n} tokens", column.len()))?;
            ensure(column.iter().all(|x| x.is_finite() && *x >= 0.0), || format!("{column:?}"))?;
            let err = (column.iter().sum::<f64>() - 1.0).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("trial {trial}: column sums to 1 {err:+e}"))?;
        }
    }
    Ok(format!("1000 forward passes, max |sum - 1| = {worst:.1e}"))
}

fn format_fidelity() -> Outcome {
    let corpus = parse_semeval_xml(common::fixture("restaurant.xml")).map_err(|e| e.to_string())?;
    let s = &corpus.sentences[0];
    ensure(s.annotations.len() == 2, || format!("{:?}", s.annotations))?;
    let food = &s.annotations[0];
    ensure(food.target.as_deref() == Some("food") && (food.from, food.to) == (4, 8), || format!("{food:?}"))?;
    ensure(cmla::data::char_slice(&s.raw_text, 4, 8) == "food", || "offset text".into())?;
    ensure(s.aspect_spans == vec![Span::new(1, 2, Head::Aspect)], || format!("{:?}", s.aspect_spans))?;
    let null_only = &corpus.sentences[1];
    ensure(null_only.aspect_spans.is_empty(), || "NULL target produced a span".into())?;

    match load_embeddings(common::fixture("bad_dim_embeddings.txt"), OovPolicy::ZeroVector) {
        Err(e @ Error::Parse { line: 3, .. }) => Ok(format!("food at [4,8), NULL dropped; embedding error \"{e}\"")),
        other => Err(format!("expected a parse error on line 3, got {other:?}")),
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut stdin = std::io::empty();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cmla::cli::run_with(args, &mut stdin, &mut out, &mut err);
    ensure(code == 0, || format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().to_str().unwrap().to_string();
    let data = format!("{root}/synth");
    run_cli(&["cmla", "synth", "--out", &data])?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = format!("{root}/{run}");
        run_cli(&[
            "cmla", "train",
            "--data", &format!("{data}/corpus.xml"),
            "--embeddings", &format!("{data}/embeddings.txt"),
            "--lexicon", &format!("{data}/lexicon.txt"),
            "--d", "8", "--k", "3", "--epochs", "8", "--seed", "9",
            "--out", &out,
        ])?;
        let ck = std::fs::read(format!("{out}/checkpoint.json")).map_err(|e| e.to_string())?;
        let trace = std::fs::read(format!("{out}/loss_trace.tsv")).map_err(|e| e.to_string())?;
        outputs.push((ck, trace));
    }
    ensure(outputs[0].0 == outputs[1].0, || "checkpoints differ".into())?;
    ensure(outputs[0].1 == outputs[1].1, || "loss traces differ".into())?;
    Ok(format!("checkpoints ({} bytes) and loss traces are byte-identical", outputs[0].0.len()))
}

fn qualitative_fixture() -> Outcome {
    let sentences = common::dutch_sentences();
    let table = common::random_embeddings(&sentences, 16, 3);
    let examples = Example::batch(&sentences, &table).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        embed_dim: 16,
        hidden_dim: 16,
        slices: 4,
        layers: 2,
    };
    let params = CmlaParams::init(config, 8).map_err(|e| e.to_string())?;
    let train = TrainConfig {
        lr: 0.3,
        epochs: 1000,
        seed: 8,
        clip: 5.0,
    };
    let exact = |p: &CmlaParams| {
        sentences.iter().all(|s| {
            let pred = p.predict(s, &table).expect("predict");
            pred.aspect_spans == s.aspect_spans && pred.opinion_spans == s.opinion_spans
        })
    };
    let outcome = train_with(&examples, params, &train, |epoch, _, p| {
        if (epoch + 1) % 20 == 0 && exact(p) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .map_err(|e| e.to_string())?;

    let expected = [
        (vec!["ligging", "terras"], vec!["goede", "prima"]),
        (vec!["dag"], vec!["leuke"]),
    ];
    let mut lines = Vec::new();
    for (s, (aspects, opinions)) in sentences.iter().zip(expected) {
        let pred = outcome.params.predict(s, &table).map_err(|e| e.to_string())?;
        ensure(pred.aspect_spans == s.aspect_spans && pred.opinion_spans == s.opinion_spans, || {
            format!("{:?}: predicted {:?} / {:?}", s.raw_text, pred.aspect_spans, pred.opinion_spans)
        })?;
        let (a, o) = (common::words(s, &pred.aspect_spans), common::words(s, &pred.opinion_spans));
        ensure(a == aspects && o == opinions, || format!("{a:?} / {o:?}"))?;
        lines.push(format!("{} / {}", a.join("+"), o.join("+")));
    }
    Ok(format!("exact spans after {} epochs: {}", outcome.loss_trace.len(), lines.join("; ")))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient integrity", gradient_integrity),
        ("overfit synthetic corpus", overfit_synthetic),
        ("BIO round-trip", bio_roundtrip),
        ("scorer oracle", scorer_oracle),
        ("attention normalization", attention_normalization),
        ("format fidelity", format_fidelity),
        ("training determinism", determinism),
        ("qualitative fixture", qualitative_fixture),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
