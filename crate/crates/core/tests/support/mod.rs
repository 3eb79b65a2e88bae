//! Shared test fixtures: random model instances and an independent
//! scalar-loop transcription of the encoder and scorer.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hgn::encoder::{CandidateInput, EdgeWeighting, EmbeddingInit, Hgn, HgnConfig, WeightNorm};
use hgn::features::StatementInput;
use hgn::graph::{ContextGraph, EdgeFeatureMode, FeatureSource, MultiRelationPolicy, Side};
use hgn::grounding::{GroundedConcepts, GroundingResult};
use hgn::kg::{EntityId, Fact, KnowledgeGraph, RelationId};
use hgn::params::ParameterStore;
use hgn::tensor::Activation;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_kg(
    rng: &mut impl Rng,
    entities: usize,
    relations: usize,
    facts: usize,
) -> KnowledgeGraph {
    let ents = (0..entities).map(|i| format!("e{i}")).collect();
    let rels = (0..relations).map(|i| format!("r{i}")).collect();
    let fs: Vec<Fact> = (0..facts)
        .map(|_| Fact {
            head: EntityId(rng.random_range(0..entities)),
            relation: RelationId(rng.random_range(0..relations)),
            tail: EntityId(rng.random_range(0..entities)),
        })
        .collect();
    KnowledgeGraph::new(ents, rels, fs).unwrap()
}

/// Random config; `max_layers` bounds the depth.
pub fn random_config(rng: &mut impl Rng, max_layers: usize) -> HgnConfig {
    let mut d = || rng.random_range(2..=5);
    let (d_ent, d_rel, d_gen, d_s, d_h) = (d(), d(), d(), d(), d());
    HgnConfig {
        layers: rng.random_range(1..=max_layers),
        d_ent,
        d_rel,
        d_gen,
        d_s,
        d_h,
        edge_weighting: if rng.random_bool(0.75) {
            EdgeWeighting::Learned
        } else {
            EdgeWeighting::FixedOne
        },
        edge_features: [
            EdgeFeatureMode::Hybrid,
            EdgeFeatureMode::ExtractedOnly,
            EdgeFeatureMode::GeneratedOnly,
        ][rng.random_range(0..3)],
        use_statement_vector: rng.random_bool(0.7),
        activation: [Activation::Relu, Activation::Tanh, Activation::Gelu][rng.random_range(0..3)],
        weight_norm: if rng.random_bool(0.7) {
            WeightNorm::Global
        } else {
            WeightNorm::PerNode
        },
    }
}

/// Candidate graph with `nq` question and `na` answer concepts drawn from
/// `kg`; sides may share entities. Every ordered node pair gets a generator vector.
pub fn random_candidate(
    rng: &mut impl Rng,
    kg: &KnowledgeGraph,
    cfg: &HgnConfig,
    nq: usize,
    na: usize,
    policy: MultiRelationPolicy,
    text_buckets: Option<usize>,
) -> CandidateInput {
    let pick = |rng: &mut dyn rand::RngCore, k: usize| GroundedConcepts {
        ids: sample(rng, kg.num_entities(), k)
            .into_iter()
            .map(EntityId)
            .collect(),
        spans: vec![(0, 0); k],
    };
    let gr = GroundingResult {
        question: pick(rng, nq),
        answer: pick(rng, na),
    };
    let graph = ContextGraph::build(&gr, kg, policy).unwrap_or_default();
    let mut generated = HashMap::new();
    for a in &graph.nodes {
        for b in &graph.nodes {
            let v: Vec<f64> = (0..cfg.d_gen)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            generated.insert((a.entity, b.entity), v);
        }
    }
    let statement = match text_buckets {
        Some(b) if rng.random_bool(0.5) => {
            let k = rng.random_range(0..5);
            StatementInput::Bag((0..k).map(|_| rng.random_range(0..b)).collect())
        }
        _ => StatementInput::Fixed((0..cfg.d_s).map(|_| rng.random_range(-1.0..1.0)).collect()),
    };
    CandidateInput {
        graph,
        generated,
        statement,
    }
}

/// Overwrites every parameter with `U(-scale, scale)` so that comparisons are
/// sensitive to every weight.
pub fn scramble(store: &mut ParameterStore<f64>, rng: &mut impl Rng, scale: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        for x in store.get_mut(id).data_mut() {
            *x = rng.random_range(-scale..scale);
        }
    }
}

pub struct Instance {
    pub kg: KnowledgeGraph,
    pub model: Hgn,
    pub store: ParameterStore<f64>,
    pub candidates: Vec<CandidateInput>,
}

/// Random model plus 2–4 candidates of at most `max_nodes` nodes each;
/// roughly one candidate in ten is degenerate.
pub fn random_instance(seed: u64, max_layers: usize, max_nodes: usize) -> Instance {
    random_instance_with(seed, max_layers, max_nodes, |_| {})
}

/// As [`random_instance`], with `edit` applied to the drawn config.
pub fn random_instance_with(
    seed: u64,
    max_layers: usize,
    max_nodes: usize,
    edit: impl FnOnce(&mut HgnConfig),
) -> Instance {
    let mut r = rng(seed);
    let mut cfg = random_config(&mut r, max_layers);
    edit(&mut cfg);
    let kg = random_kg(&mut r, 10, 3, 25);
    let policy = if r.random_bool(0.5) {
        MultiRelationPolicy::LiteralUnique
    } else {
        MultiRelationPolicy::FirstByPriority
    };
    let buckets = r.random_bool(0.5).then_some(7);
    let mut store = ParameterStore::new();
    let model = Hgn::new(
        &mut store,
        &cfg,
        kg.num_entities(),
        kg.num_relations(),
        buckets,
        &EmbeddingInit::default(),
        &mut r,
    )
    .unwrap();
    scramble(&mut store, &mut r, 1.0);
    let k = r.random_range(2..=4);
    let candidates = (0..k)
        .map(|_| {
            let (nq, na) = if r.random_bool(0.1) {
                (r.random_range(0..=1), 0)
            } else {
                let nq = r.random_range(1..max_nodes);
                (nq, r.random_range(1..=max_nodes - nq))
            };
            random_candidate(&mut r, &kg, &cfg, nq, na, policy, buckets)
        })
        .collect();
    Instance {
        kg,
        model,
        store,
        candidates,
    }
}

// Scalar-loop oracle. Reads parameters by name and never touches the tape.

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Gelu => {
            0.5 * x
                * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn mlp(store: &ParameterStore<f64>, name: &str, a: Activation, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut k = 0;
    while let Some(w) = store.by_name(&format!("{name}.{k}.weight")) {
        let b = store.by_name(&format!("{name}.{k}.bias")).unwrap();
        let (din, dout) = (w.shape()[0], w.shape()[1]);
        assert_eq!(din, h.len(), "{name}.{k}");
        let mut y = vec![0.0; dout];
        for j in 0..dout {
            let mut acc = b.data()[j];
            for i in 0..din {
                acc += h[i] * w.data()[i * dout + j];
            }
            y[j] = acc;
        }
        k += 1;
        if store.by_name(&format!("{name}.{k}.weight")).is_some() {
            for v in &mut y {
                *v = act(a, *v);
            }
        }
        h = y;
    }
    h
}

fn row(store: &ParameterStore<f64>, name: &str, i: usize) -> Vec<f64> {
    let t = store.by_name(name).unwrap();
    let d = t.shape()[1];
    t.data()[i * d..(i + 1) * d].to_vec()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let mx = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn oracle_statement(
    store: &ParameterStore<f64>,
    cfg: &HgnConfig,
    input: &StatementInput,
) -> Option<Vec<f64>> {
    if !cfg.use_statement_vector {
        return None;
    }
    Some(match input {
        StatementInput::Fixed(v) => v.clone(),
        StatementInput::Bag(ids) => {
            let mut s = vec![0.0; cfg.d_s];
            for &i in ids {
                for (acc, x) in s.iter_mut().zip(row(store, "text.buckets", i)) {
                    *acc += x / ids.len() as f64;
                }
            }
            s
        }
    })
}

pub struct OracleGraph {
    pub g: Vec<f64>,
    /// Edge weights of every layer, empty for a degenerate graph.
    pub weights: Vec<Vec<f64>>,
}

pub fn oracle_encode(
    store: &ParameterStore<f64>,
    cfg: &HgnConfig,
    input: &CandidateInput,
    s: Option<&[f64]>,
) -> OracleGraph {
    let graph = &input.graph;
    let a = cfg.activation;
    let nq = graph
        .nodes
        .iter()
        .filter(|n| n.side == Side::Question)
        .count();
    if nq == 0 || nq == graph.nodes.len() {
        return OracleGraph {
            g: vec![0.0; cfg.d_h],
            weights: Vec::new(),
        };
    }
    // (src, dst, initial feature) after the edge feature mode is applied
    let mut edges: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for e in &graph.edges {
        let pair = (graph.nodes[e.src].entity, graph.nodes[e.dst].entity);
        let gen = |store| mlp(store, "adapt", a, &input.generated[&pair]);
        let feat = match (cfg.edge_features, e.source) {
            (EdgeFeatureMode::GeneratedOnly, _) => gen(store),
            (_, FeatureSource::Extracted(r)) => row(store, "rel", r.0),
            (EdgeFeatureMode::ExtractedOnly, FeatureSource::Generated { .. }) => continue,
            (_, FeatureSource::Generated { .. }) => gen(store),
        };
        edges.push((e.src, e.dst, feat));
    }
    let n = graph.nodes.len();
    let mut h: Vec<Vec<f64>> = graph
        .nodes
        .iter()
        .map(|nd| row(store, "ent", nd.entity.0))
        .collect();
    let mut he: Vec<Vec<f64>> = edges.iter().map(|e| e.2.clone()).collect();
    let sv = s.unwrap_or(&[]);
    let mut weights = Vec::new();
    for l in 1..=cfg.layers {
        let name = |part: &str| format!("layer{l}.{part}");
        let mut he_new = Vec::with_capacity(edges.len());
        let mut raw = Vec::with_capacity(edges.len());
        for (k, &(i, j, _)) in edges.iter().enumerate() {
            let x: Vec<f64> = [&h[i][..], &h[j][..], &he[k][..], sv].concat();
            he_new.push(mlp(store, &name("v2e"), a, &x));
            if cfg.edge_weighting == EdgeWeighting::Learned {
                let wx: Vec<f64> = [&he[k][..], sv].concat();
                raw.push(mlp(store, &name("w"), a, &wx)[0].clamp(-30.0, 30.0));
            }
        }
        let w = match cfg.edge_weighting {
            EdgeWeighting::FixedOne => vec![1.0; edges.len()],
            EdgeWeighting::Learned => match cfg.weight_norm {
                WeightNorm::Global => softmax(&raw),
                WeightNorm::PerNode => {
                    let mut out = vec![0.0; edges.len()];
                    for j in 0..n {
                        let idx: Vec<usize> =
                            (0..edges.len()).filter(|&k| edges[k].1 == j).collect();
                        let sm = softmax(&idx.iter().map(|&k| raw[k]).collect::<Vec<_>>());
                        for (&k, p) in idx.iter().zip(sm) {
                            out[k] = p;
                        }
                    }
                    out
                }
            },
        };
        let mut agg = vec![vec![0.0; cfg.d_h]; n];
        for (k, &(i, j, _)) in edges.iter().enumerate() {
            let u = mlp(store, &name("u"), a, &[&h[i][..], &he_new[k][..]].concat());
            for (acc, x) in agg[j].iter_mut().zip(u) {
                *acc += w[k] * x;
            }
        }
        h = agg.iter().map(|x| mlp(store, &name("e2v"), a, x)).collect();
        if !edges.is_empty() {
            weights.push(w);
            he = he_new;
        }
    }
    let query = match s {
        Some(s) => s.to_vec(),
        None => row(store, "att.query", 0),
    };
    let watt = store.by_name("att.weight").unwrap();
    let dh = cfg.d_h;
    let q: Vec<f64> = (0..dh)
        .map(|j| {
            (0..query.len())
                .map(|i| query[i] * watt.data()[i * dh + j])
                .sum()
        })
        .collect();
    let alpha: Vec<f64> = h
        .iter()
        .map(|hi| hi.iter().zip(&q).map(|(x, y)| x * y).sum())
        .collect();
    let p = softmax(&alpha);
    let mut g = vec![0.0; dh];
    for (pi, hi) in p.iter().zip(&h) {
        for (acc, x) in g.iter_mut().zip(hi) {
            *acc += pi * x;
        }
    }
    OracleGraph { g, weights }
}

pub fn oracle_score(
    store: &ParameterStore<f64>,
    cfg: &HgnConfig,
    s: &[Option<Vec<f64>>],
    g: &[Vec<f64>],
) -> Vec<f64> {
    let rho: Vec<f64> = s
        .iter()
        .zip(g)
        .map(|(s, g)| {
            let x: Vec<f64> = s.iter().flatten().chain(g).copied().collect();
            mlp(store, "score", cfg.activation, &x)[0]
        })
        .collect();
    softmax(&rho)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
