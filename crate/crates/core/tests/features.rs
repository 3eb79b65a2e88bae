use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hgn::bench::init_rng;
use hgn::encoder::{EmbeddingInit, Hgn, HgnConfig};
use hgn::features::{
    parse_generated_fixture, parse_statement_fixture, parse_training_prompt,
    serialize_generation_prompt, serialize_training_prompt, stub_feature,
    write_generated_fixture_line, write_statement_fixture_line, GeneratedFeatureProvider,
    StatementProvider,
};
use hgn::graph::FeatureSource;
use hgn::kg::{EntityId, RelationId};
use hgn::params::ParameterStore;
use hgn::tensor::Tape;

const WORDS: &[&str] = &[
    "print", "paper", "use", "fox", "den", "night", "ice", "cream", "city", "water", "bottle",
    "book", "read", "at", "location", "is", "a", "part", "of", "x2", "dollar",
];

fn name(rng: &mut impl Rng, max_words: usize) -> String {
    let k = rng.random_range(1..=max_words);
    (0..k)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join("_")
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 1000 pairs sharing a head with different tails, at width 64. The count is
/// frozen: the stub is a pure function of its inputs.
#[test]
fn stub_vectors_for_different_tails_are_nearly_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut below, mut worst) = (0, f64::NEG_INFINITY);
    for i in 0..1000 {
        let head = name(&mut rng, 2);
        let (t1, t2) = (
            format!("{}_{i}", name(&mut rng, 2)),
            format!("{}_{i}b", name(&mut rng, 2)),
        );
        let a = stub_feature(&head, &t1, 0, 64);
        let b = stub_feature(&head, &t2, 0, 64);
        let c = cosine(&a, &b);
        below += usize::from(c < 0.5);
        worst = worst.max(c);
    }
    assert!(below >= 990, "{below} of 1000 below 0.5");
    assert_eq!(below, 1000, "frozen measurement; worst cosine {worst:.3}");
}

#[test]
fn stub_vectors_are_unit_and_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (h, t) = (name(&mut rng, 3), name(&mut rng, 3));
        let dim = rng.random_range(1..100);
        let v = stub_feature(&h, &t, 11, dim);
        let norm = cosine(&v, &v).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(v, stub_feature(&h, &t, 11, dim));
    }
}

#[test]
fn training_prompts_round_trip_for_a_hundred_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let (h, r, t) = (name(&mut rng, 3), name(&mut rng, 2), name(&mut rng, 3));
        let s = serialize_training_prompt(&h, &r, &t);
        assert!(!s.contains('_'));
        assert!(s.starts_with(&serialize_generation_prompt(&h, &t)));
        assert_eq!(parse_training_prompt(&s), Some((h, r, t)), "{s:?}");
    }
    let loose = "print $ paper $ print used  for paper";
    let parsed = parse_training_prompt(loose).unwrap();
    assert_eq!(
        parsed.1, "used_for",
        "space runs collapse like underscores do"
    );
    assert_eq!(
        parse_training_prompt(&serialize_training_prompt(&parsed.0, &parsed.1, &parsed.2)),
        Some(parsed)
    );
    assert_eq!(parse_training_prompt(" $ paper $  x paper"), None);
}

#[test]
fn fixture_files_parse_back_and_lookups_are_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::new();
    let mut stmt = String::new();
    let mut want = HashMap::new();
    for i in 0..30 {
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        text += &write_generated_fixture_line(&format!("h{i}"), &format!("t_{i}"), &v);
        stmt += &write_statement_fixture_line(&format!("ex-{i}"), i % 4, &v);
        want.insert(i, v);
    }
    let (dim, gen) = parse_generated_fixture(&text, "gen").unwrap();
    let (sdim, st) = parse_statement_fixture(&stmt, "stmt").unwrap();
    assert_eq!((dim, sdim), (6, 6));
    for (i, v) in &want {
        assert_eq!(&gen[&(format!("h{i}"), format!("t_{i}"))], v);
        assert_eq!(&st[&(format!("ex-{i}"), i % 4)], v);
    }

    let kg =
        hgn::kg::KnowledgeGraph::from_strs("", "h1\nt_1\n", "r\n", Default::default()).unwrap();
    let provider = GeneratedFeatureProvider::fixture(6, gen);
    let first = provider.feature(EntityId(0), EntityId(1), &kg).unwrap();
    for _ in 0..5 {
        let again = provider.feature(EntityId(0), EntityId(1), &kg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&first), bits(&again));
    }
    assert!(provider.feature(EntityId(1), EntityId(0), &kg).is_err());

    let sp = StatementProvider::Fixture {
        dim: 6,
        vectors: st,
    };
    assert_eq!(
        sp.input("ex-3", 3, "q", "a").unwrap(),
        sp.input("ex-3", 3, "other", "text").unwrap()
    );
    assert!(sp.input("ex-3", 2, "q", "a").is_err(), "misses are errors");
}

/// Both edge feature branches have width `d_rel`, and the backward pass
/// only reaches parameters, never the generator vector.
#[test]
fn edge_features_have_relation_width_and_generator_inputs_stay_constant() {
    let cfg = HgnConfig {
        d_ent: 3,
        d_rel: 5,
        d_gen: 7,
        d_s: 2,
        d_h: 4,
        ..HgnConfig::default()
    };
    let mut store = ParameterStore::<f64>::new();
    let model = Hgn::new(
        &mut store,
        &cfg,
        4,
        3,
        None,
        &EmbeddingInit::default(),
        &mut init_rng(0),
    )
    .unwrap();
    let mut tape = Tape::with_params(&store);
    let gen = stub_feature("a", "b", 0, 7);
    let ext = model
        .embedding
        .edge_feature(&mut tape, FeatureSource::Extracted(RelationId(2)), None)
        .unwrap();
    let before = tape.len();
    let g = model
        .embedding
        .edge_feature(
            &mut tape,
            FeatureSource::Generated {
                head: EntityId(0),
                tail: EntityId(1),
            },
            Some(&gen),
        )
        .unwrap();
    assert_eq!(tape.shape(ext), [1, 5]);
    assert_eq!(tape.shape(g), [1, 5]);
    let both = tape.concat(&[ext, g], 1).unwrap();
    let loss = tape.sum(both).unwrap();
    let grads = tape.backward(loss).unwrap();
    let inputs: Vec<_> = tape
        .vars()
        .skip(before)
        .filter(|&v| !tape.requires_grad(v) && tape.value(v) == gen.as_slice())
        .collect();
    assert_eq!(
        inputs.len(),
        1,
        "the generator vector enters as one constant"
    );
    assert!(grads.wrt(inputs[0]).is_none());
    assert_eq!(gen, stub_feature("a", "b", 0, 7));
}
