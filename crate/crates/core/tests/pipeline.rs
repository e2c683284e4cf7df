mod common;

use cmla::data::{
    exclude_sources, generate_synthetic, parse_semeval_str, to_semeval_xml, DatasetStats, SynthConfig,
};
use cmla::model::{loss_and_grads, CmlaParams, Example, ModelConfig};

fn synthetic(n: usize, seed: u64) -> Vec<cmla::Sentence> {
    let cfg = SynthConfig {
        n_sentences: n,
        seed,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg).unwrap().sentences
}

#[test]
fn dataset_stats_on_full_sized_files() {
    for (n, seed) in [(1700, 1), (575, 2)] {
        let xml = to_semeval_xml(&synthetic(n, seed));
        let parsed = parse_semeval_str(&xml, "synthetic").unwrap();
        let stats = DatasetStats::of(&parsed.sentences);
        assert_eq!(stats.sentences, n);
        assert_eq!(stats.aspect_spans, n);
        assert_eq!(stats.without_aspect, 0);
    }
}

#[test]
fn exclude_source_drops_a_subset() {
    let mut sentences = common::dutch_sentences();
    sentences.extend(synthetic(3, 4));
    let kept = exclude_sources(sentences, &["children:".to_string()]);
    assert_eq!(kept.len(), 4);
    assert!(kept.iter().all(|s| !s.source_id.starts_with("children:")));
}

#[test]
fn xml_targets_survive_label_round_trip() {
    let sentences = common::dutch_sentences();
    for s in &sentences {
        for (span, ann) in s.aspect_spans.iter().zip(s.annotations.iter().filter(|a| a.target.is_some())) {
            assert_eq!(s.span_text(span), ann.target.as_deref().unwrap());
        }
    }
    assert_eq!(common::words(&sentences[0], &sentences[0].opinion_spans), ["goede", "prima"]);
}

#[test]
fn no_dead_parameters() {
    let sentences = common::dutch_sentences();
    let table = common::random_embeddings(&sentences, 6, 9);
    let examples = Example::batch(&sentences, &table).unwrap();
    let config = ModelConfig {
        embed_dim: 6,
        hidden_dim: 5,
        slices: 3,
        layers: 2,
    };
    let params = CmlaParams::init(config, 4).unwrap();
    let mut total: Vec<f64> = vec![0.0; CmlaParams::names().len()];
    for ex in &examples {
        let (_, grads) = loss_and_grads(&params, ex).unwrap();
        for (t, g) in total.iter_mut().zip(&grads) {
            *t += g.data().iter().map(|x| x.abs()).sum::<f64>();
        }
    }
    for (name, t) in CmlaParams::names().iter().zip(&total) {
        assert!(*t > 0.0, "{name} receives no gradient");
    }
}
