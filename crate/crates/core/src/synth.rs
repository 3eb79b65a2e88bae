//! Synthetic multiple-choice benchmark with a planted evidence fact per example.
//!
//! Concepts are single tokens `c0 … c{V-1}`; relation 0 is `evidence`. Each
//! example has `question_concepts` concepts in the question and one concept per
//! candidate. The gold candidate is the only one linked to a question concept
//! by an `evidence` fact. Each example also adds `noise_per_planted` facts with
//! other relations between random question/candidate pairs.
//!
//! With probability `ambiguous_rate` the planted pair also receives a second,
//! non-evidence relation. Under the literal-unique policy that pair becomes a
//! generated edge, so only a model that reads generated features can see the
//! evidence there.
//!
//! The generated-feature fixture mimics a generator that has learned the KG.
//! For a pair linked by relations `R` the vector is
//! `normalize(gen_signal · Σ_{r∈R} proto_r + gen_noise · z)`, and for an
//! unlinked pair it is `z`. Here `proto_r` is a fixed unit prototype per
//! relation and `z = stub_feature(h, t)`. Statement vectors are plain stub
//! vectors and carry no answer signal.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{bench_model_config, bench_train_config};
use crate::dataset::{dataset_to_string, Example};
use crate::encoder::EdgeWeighting;
use crate::error::{write_file, Error, Result};
use crate::features::{stub_feature, write_generated_fixture_line, write_statement_fixture_line};
use crate::graph::EdgeFeatureMode;
use crate::kg::{EntityId, Fact, KnowledgeGraph, RelationId};

pub const EVIDENCE: &str = "evidence";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub vocab_size: usize,
    /// Total relations including `evidence`.
    pub relations: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub candidates: usize,
    pub question_concepts: usize,
    /// Distractor facts added per planted fact.
    pub noise_per_planted: usize,
    pub ambiguous_rate: f64,
    pub gen_signal: f64,
    pub gen_noise: f64,
    pub d_gen: usize,
    pub d_s: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 150,
            relations: 6,
            train: 500,
            dev: 0,
            test: 200,
            candidates: 4,
            question_concepts: 5,
            noise_per_planted: 3,
            ambiguous_rate: 0.5,
            gen_signal: 4.0,
            gen_noise: 1.0,
            d_gen: 16,
            d_s: 16,
            seed: 0,
        }
    }
}

/// Ground truth kept alongside each example for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub head: EntityId,
    pub gold: EntityId,
    /// Whether the planted pair carries a second relation.
    pub ambiguous: bool,
    /// Distractor fact pairs added with this example.
    pub distractors: Vec<(EntityId, EntityId)>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub kg: KnowledgeGraph,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    /// Keyed by example id.
    pub planted: HashMap<String, Planted>,
    pub generated: HashMap<(String, String), Vec<f64>>,
    pub statements: HashMap<(String, usize), Vec<f64>>,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn concept(i: usize) -> String {
    format!("c{i}")
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let need = self.question_concepts + self.candidates;
        if self.candidates < 2 || self.question_concepts == 0 {
            return Err(Error::Argument(
                "need at least 2 candidates and 1 question concept".into(),
            ));
        }
        if self.vocab_size < need {
            return Err(Error::Argument(format!(
                "vocab_size {} < {need} concepts per example",
                self.vocab_size
            )));
        }
        if self.relations < 2 {
            return Err(Error::Argument(
                "need `evidence` plus at least one other relation".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ambiguous_rate) {
            return Err(Error::Argument("ambiguous_rate must lie in [0, 1]".into()));
        }
        if self.d_gen == 0 || self.d_s == 0 {
            return Err(Error::Argument("feature widths must be positive".into()));
        }
        Ok(())
    }
}

/// Generates a benchmark; identical specs give identical output.
pub fn generate_synth(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.train + spec.dev + spec.test;
    let mut facts: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    let mut linked: HashSet<(usize, usize)> = HashSet::new();
    let mut evidence: HashSet<(usize, usize)> = HashSet::new();
    // (question concept, distractor) pairs of earlier examples must never gain evidence
    let mut forbidden: HashSet<(usize, usize)> = HashSet::new();
    let mut raw = Vec::with_capacity(total);
    for n in 0..total {
        let mut placed = None;
        for _ in 0..1000 {
            let picks = sample(
                &mut rng,
                spec.vocab_size,
                spec.question_concepts + spec.candidates,
            )
            .into_vec();
            let (qs, cs) = picks.split_at(spec.question_concepts);
            let gold = rng.random_range(0..spec.candidates);
            let head = qs[rng.random_range(0..qs.len())];
            let ok = !linked.contains(&(head, cs[gold]))
                && !forbidden.contains(&(head, cs[gold]))
                && qs.iter().all(|&q| {
                    cs.iter()
                        .enumerate()
                        .all(|(k, &c)| k == gold || !evidence.contains(&(q, c)))
                });
            if ok {
                placed = Some((qs.to_vec(), cs.to_vec(), gold, head));
                break;
            }
        }
        let (qs, cs, gold, head) = placed.ok_or_else(|| {
            Error::Argument(format!(
                "could not place example {n}; vocab_size {} is too small",
                spec.vocab_size
            ))
        })?;
        let tail = cs[gold];
        facts.insert((head, 0, tail));
        linked.insert((head, tail));
        evidence.insert((head, tail));
        let ambiguous = rng.random::<f64>() < spec.ambiguous_rate;
        if ambiguous {
            facts.insert((head, rng.random_range(1..spec.relations), tail));
        }
        for &q in &qs {
            for (k, &c) in cs.iter().enumerate() {
                if k != gold {
                    forbidden.insert((q, c));
                }
            }
        }
        let mut distractors = Vec::new();
        for _ in 0..spec.noise_per_planted {
            for _ in 0..20 {
                let q = qs[rng.random_range(0..qs.len())];
                let c = cs[rng.random_range(0..cs.len())];
                if !linked.contains(&(q, c)) {
                    facts.insert((q, rng.random_range(1..spec.relations), c));
                    linked.insert((q, c));
                    distractors.push((q, c));
                    break;
                }
            }
        }
        raw.push((qs, cs, gold, head, ambiguous, distractors));
    }

    let entities: Vec<String> = (0..spec.vocab_size).map(concept).collect();
    let relations: Vec<String> = std::iter::once(EVIDENCE.to_string())
        .chain((1..spec.relations).map(|r| format!("rel{r}")))
        .collect();
    let kg = KnowledgeGraph::new(
        entities,
        relations,
        facts.iter().map(|&(h, r, t)| Fact {
            head: EntityId(h),
            relation: RelationId(r),
            tail: EntityId(t),
        }),
    )?;

    let protos: Vec<Vec<f64>> = (0..spec.relations)
        .map(|r| stub_feature("relation", &r.to_string(), spec.seed ^ 0x5eed, spec.d_gen))
        .collect();
    let mut generated = HashMap::new();
    let mut statements = HashMap::new();
    let mut planted = HashMap::new();
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (n, (qs, cs, gold, head, ambiguous, distractors)) in raw.into_iter().enumerate() {
        let (split, bucket) = if n < spec.train {
            ("train", &mut train)
        } else if n < spec.train + spec.dev {
            ("dev", &mut dev)
        } else {
            ("test", &mut test)
        };
        let id = format!("{split}-{n}");
        let question = format!(
            "which answer goes with {}",
            qs.iter().map(|&q| concept(q)).collect::<Vec<_>>().join(" ")
        );
        for &q in &qs {
            for &c in &cs {
                for (h, t) in [(q, c), (c, q)] {
                    let key = (concept(h), concept(t));
                    if generated.contains_key(&key) {
                        continue;
                    }
                    let z = stub_feature(&key.0, &key.1, spec.seed, spec.d_gen);
                    let rels = kg.relations_between(EntityId(h), EntityId(t))?;
                    let v = if rels.is_empty() {
                        z
                    } else {
                        unit(
                            (0..spec.d_gen)
                                .map(|d| {
                                    spec.gen_signal
                                        * rels.iter().map(|r| protos[r.0][d]).sum::<f64>()
                                        + spec.gen_noise * z[d]
                                })
                                .collect(),
                        )
                    };
                    generated.insert(key, v);
                }
            }
        }
        for k in 0..cs.len() {
            statements.insert(
                (id.clone(), k),
                stub_feature(&id, &k.to_string(), spec.seed.wrapping_add(1), spec.d_s),
            );
        }
        planted.insert(
            id.clone(),
            Planted {
                head: EntityId(head),
                gold: EntityId(cs[gold]),
                ambiguous,
                distractors: distractors
                    .into_iter()
                    .map(|(a, b)| (EntityId(a), EntityId(b)))
                    .collect(),
            },
        );
        bucket.push(Example {
            id,
            question,
            candidates: cs.iter().map(|&c| concept(c)).collect(),
            gold,
        });
    }
    Ok(SynthData {
        spec: spec.clone(),
        kg,
        train,
        dev,
        test,
        planted,
        generated,
        statements,
    })
}

/// Picks the candidate linked to a question concept by `evidence`; `None` if
/// zero or several qualify.
pub fn oracle_answer(ex: &Example, kg: &KnowledgeGraph) -> Option<usize> {
    let ev = kg.relation_id(EVIDENCE)?;
    let qs: Vec<EntityId> = ex
        .question
        .split_whitespace()
        .filter_map(|w| kg.entity_id(w))
        .collect();
    let hits: Vec<usize> = ex
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            kg.entity_id(c).is_some_and(|c| {
                qs.iter()
                    .any(|&q| kg.relations_between(q, c).is_ok_and(|rs| rs.contains(&ev)))
            })
        })
        .map(|(k, _)| k)
        .collect();
    match hits[..] {
        [only] => Some(only),
        _ => None,
    }
}

impl SynthData {
    /// Writes the KG, splits, fixtures, and a ready-to-run `config.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let (facts, entities, relations) = self.kg.to_strings();
        write_file(&dir.join("entities.txt"), entities)?;
        write_file(&dir.join("relations.txt"), relations)?;
        write_file(&dir.join("facts.tsv"), facts)?;
        write_file(&dir.join("train.jsonl"), dataset_to_string(&self.train))?;
        if !self.dev.is_empty() {
            write_file(&dir.join("dev.jsonl"), dataset_to_string(&self.dev))?;
        }
        write_file(&dir.join("test.jsonl"), dataset_to_string(&self.test))?;
        let mut gen: Vec<_> = self.generated.iter().collect();
        gen.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for ((h, t), v) in gen {
            out.push_str(&write_generated_fixture_line(h, t, v));
        }
        write_file(&dir.join("generated.tsv"), out)?;
        let mut st: Vec<_> = self.statements.iter().collect();
        st.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for ((id, k), v) in st {
            out.push_str(&write_statement_fixture_line(id, *k, v));
        }
        write_file(&dir.join("statements.tsv"), out)?;
        let mut cfg = String::new();
        let _ = write!(
            cfg,
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "kg": {"entities": "entities.txt", "relations": "relations.txt", "facts": "facts.tsv"},
                "features": {"generated_fixture": "generated.tsv", "statement_fixture": "statements.tsv"},
                "synth": self.spec,
                "data": {
                    "train": "train.jsonl",
                    "dev": if self.dev.is_empty() { serde_json::Value::Null } else { "dev.jsonl".into() },
                    "test": "test.jsonl",
                },
                "model": bench_model_config(&self.spec, EdgeWeighting::Learned, EdgeFeatureMode::Hybrid),
                "train": bench_train_config(self.spec.seed, 0.01),
                "output": "out",
            }))?
        );
        cfg.push('\n');
        write_file(&dir.join("config.json"), cfg)
    }
}
