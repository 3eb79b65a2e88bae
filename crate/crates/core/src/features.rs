//! Feature sources for nodes, edges, and statements.
//!
//! Node features are rows of a learnable entity table. Edge features are
//! either rows of a learnable relation table (extracted edges) or the frozen
//! generator's vector for the concept pair passed through a learnable adapter
//! (generated edges). Generator outputs are plain constants on the tape, so no
//! gradient ever reaches them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{read_to_string, Error, Result};
use crate::graph::{ContextGraph, FeatureSource};
use crate::grounding::tokenize;
use crate::kg::{normalize_concept, EntityId, KnowledgeGraph};
use crate::params::{ParamId, ParameterStore};
use crate::tensor::{lit, Mlp, Real, Tape, Tensor, Var};

/// Standard deviation of randomly initialized embedding tables.
pub const EMBEDDING_INIT_STD: f64 = 0.02;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable hash of `(seed, head, tail)`; a unit separator keeps the fields apart.
pub fn pair_hash(seed: u64, head: &str, tail: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(head.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(tail.as_bytes());
    fnv1a(&bytes)
}

/// Deterministic stand-in for the generator: a Gaussian stream seeded by the
/// pair hash, scaled to unit L2 norm.
pub fn stub_feature(head: &str, tail: &str, seed: u64, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "stub feature width must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(pair_hash(seed, head, tail));
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn render(name: &str) -> String {
    name.split('_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Training sequence `h $ t $ h r t` for generator finetuning.
pub fn serialize_training_prompt(head: &str, relation: &str, tail: &str) -> String {
    let (h, r, t) = (render(head), render(relation), render(tail));
    format!("{h} $ {t} $ {h} {r} {t}")
}

/// Generation prompt `h $ t $`.
pub fn serialize_generation_prompt(head: &str, tail: &str) -> String {
    format!("{} $ {} $", render(head), render(tail))
}

/// Recovers `(head, relation, tail)` in underscore form from a training sequence.
pub fn parse_training_prompt(s: &str) -> Option<(String, String, String)> {
    let mut parts = s.splitn(3, " $ ");
    let (h, t, rest) = (parts.next()?, parts.next()?, parts.next()?);
    let r = rest
        .strip_prefix(h)?
        .strip_prefix(' ')?
        .strip_suffix(t)?
        .strip_suffix(' ')?;
    // Same segmentation as `render`, so parse(serialize(parse(s))) == parse(s)
    let under = |x: &str| {
        x.split([' ', '_'])
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join("_")
    };
    let (h, r, t) = (under(h), under(r), under(t));
    if h.is_empty() || r.is_empty() || t.is_empty() {
        return None;
    }
    Some((h, r, t))
}

/// Parsed embedding file: first line `count dim`, then one row per line.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub count: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

fn parse_floats(field: &str, source: &str, line: usize) -> Result<Vec<f64>> {
    field
        .split_whitespace()
        .map(|x| match x.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::load(source, line, format!("bad number {x:?}"))),
        })
        .collect()
}

pub fn parse_embedding_file(text: &str, source: &str) -> Result<EmbeddingFile> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::load(source, 1, "missing header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|x| {
            x.parse()
                .map_err(|_| Error::load(source, 1, format!("bad header field {x:?}")))
        })
        .collect::<Result<_>>()?;
    let [count, dim] = dims[..] else {
        return Err(Error::load(source, 1, "header must be `count dim`"));
    };
    if count == 0 || dim == 0 {
        return Err(Error::load(source, 1, "count and dim must be positive"));
    }
    let mut values = Vec::with_capacity(count.saturating_mul(dim).min(1 << 24));
    let mut rows = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_floats(line, source, i + 1)?;
        if row.len() != dim {
            return Err(Error::load(
                source,
                i + 1,
                format!("expected {dim} values, got {}", row.len()),
            ));
        }
        rows += 1;
        if rows > count {
            return Err(Error::load(
                source,
                i + 1,
                format!("more than {count} rows"),
            ));
        }
        values.extend(row);
    }
    if rows != count {
        return Err(Error::load(
            source,
            text.lines().count(),
            format!("expected {count} rows, got {rows}"),
        ));
    }
    Ok(EmbeddingFile { count, dim, values })
}

pub fn write_embedding_file(count: usize, dim: usize, values: &[f64]) -> String {
    let mut out = format!("{count} {dim}\n");
    for row in values.chunks(dim) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}

/// Rows of a TSV whose last field is a space-separated vector; returns
/// `(leading fields, vector)` pairs, all vectors of one width.
/// Keyed vector rows: string key fields followed by the vector.
type KeyedRows = Vec<(Vec<String>, Vec<f64>)>;

fn parse_vector_tsv(text: &str, source: &str, keys: usize) -> Result<(usize, KeyedRows)> {
    let mut dim = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != keys + 1 {
            return Err(Error::load(
                source,
                i + 1,
                format!(
                    "expected {} tab-separated fields, got {}",
                    keys + 1,
                    fields.len()
                ),
            ));
        }
        let v = parse_floats(fields[keys], source, i + 1)?;
        if v.is_empty() {
            return Err(Error::load(source, i + 1, "empty vector"));
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::load(
                    source,
                    i + 1,
                    format!("vector width {} differs from {d}", v.len()),
                ));
            }
            _ => {}
        }
        rows.push((fields[..keys].iter().map(|s| s.to_string()).collect(), v));
    }
    let dim = dim.ok_or_else(|| Error::load(source, 1, "no vectors"))?;
    Ok((dim, rows))
}

fn format_vector(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub type GeneratedFixture = HashMap<(String, String), Vec<f64>>;
pub type StatementFixture = HashMap<(String, usize), Vec<f64>>;

/// Generated-feature fixture: `head<TAB>tail<TAB>v1 … v_d`.
pub fn parse_generated_fixture(text: &str, source: &str) -> Result<(usize, GeneratedFixture)> {
    let (dim, rows) = parse_vector_tsv(text, source, 2)?;
    let mut map = HashMap::with_capacity(rows.len());
    for (keys, v) in rows {
        map.insert(
            (normalize_concept(&keys[0]), normalize_concept(&keys[1])),
            v,
        );
    }
    Ok((dim, map))
}

pub fn write_generated_fixture_line(head: &str, tail: &str, v: &[f64]) -> String {
    format!("{head}\t{tail}\t{}\n", format_vector(v))
}

/// Statement fixture: `example_id<TAB>candidate_idx<TAB>v1 … v_d`.
pub fn parse_statement_fixture(text: &str, source: &str) -> Result<(usize, StatementFixture)> {
    let (dim, rows) = parse_vector_tsv(text, source, 2)?;
    let mut map = HashMap::with_capacity(rows.len());
    for (i, (keys, v)) in rows.into_iter().enumerate() {
        let idx = keys[1].trim().parse().map_err(|_| {
            Error::load(source, i + 1, format!("bad candidate index {:?}", keys[1]))
        })?;
        map.insert((keys[0].clone(), idx), v);
    }
    Ok((dim, map))
}

pub fn write_statement_fixture_line(example_id: &str, candidate: usize, v: &[f64]) -> String {
    format!("{example_id}\t{candidate}\t{}\n", format_vector(v))
}

/// A learnable `[count × dim]` lookup table held in the parameter store.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingTable {
    pub id: ParamId,
    pub count: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Initializes from `init` when given, else from `N(0, 0.02²)`.
    pub fn new<T: Real>(
        store: &mut ParameterStore<T>,
        name: &str,
        count: usize,
        dim: usize,
        init: Option<&EmbeddingFile>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let id = match init {
            Some(file) => {
                if file.count != count || file.dim != dim {
                    return Err(Error::Argument(format!(
                        "{name}: file is {}x{}, expected {count}x{dim}",
                        file.count, file.dim
                    )));
                }
                let data = file.values.iter().map(|&x| lit(x)).collect();
                store.add(name, Tensor::new(vec![count, dim], data)?)?
            }
            None => store.add_normal(name, vec![count, dim], EMBEDDING_INIT_STD, rng)?,
        };
        Ok(EmbeddingTable { id, count, dim })
    }

    /// `[ids.len() × dim]` rows, gradient-tracked.
    pub fn lookup<T: Real>(&self, tape: &mut Tape<'_, T>, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.count) {
            return Err(Error::Argument(format!(
                "row {bad} out of {} rows",
                self.count
            )));
        }
        let table = tape.param(self.id);
        Ok(tape.gather_rows(table, ids)?)
    }

    /// Node feature of a single entity, `[1 × dim]`.
    pub fn row<T: Real>(&self, tape: &mut Tape<'_, T>, id: usize) -> Result<Var> {
        self.lookup(tape, &[id])
    }
}

#[derive(Debug, Clone)]
pub enum GeneratedBackend {
    Fixture(HashMap<(String, String), Vec<f64>>),
    Stub { seed: u64 },
}

/// Frozen generator outputs keyed by ordered concept pair.
#[derive(Debug)]
pub struct GeneratedFeatureProvider {
    backend: GeneratedBackend,
    dim: usize,
    cache: RwLock<HashMap<(EntityId, EntityId), Vec<f64>>>,
}

impl GeneratedFeatureProvider {
    pub fn stub(seed: u64, dim: usize) -> Self {
        GeneratedFeatureProvider {
            backend: GeneratedBackend::Stub { seed },
            dim,
            cache: RwLock::default(),
        }
    }

    pub fn fixture(dim: usize, vectors: HashMap<(String, String), Vec<f64>>) -> Self {
        GeneratedFeatureProvider {
            backend: GeneratedBackend::Fixture(vectors),
            dim,
            cache: RwLock::default(),
        }
    }

    pub fn load_fixture(path: &Path) -> Result<Self> {
        let (dim, map) =
            parse_generated_fixture(&read_to_string(path)?, &path.display().to_string())?;
        Ok(GeneratedFeatureProvider::fixture(dim, map))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, head: EntityId, tail: EntityId, kg: &KnowledgeGraph) -> Result<Vec<f64>> {
        if let Some(v) = self.cache.read().expect("cache lock").get(&(head, tail)) {
            return Ok(v.clone());
        }
        let (h, t) = (kg.entity_name(head), kg.entity_name(tail));
        let v = match &self.backend {
            GeneratedBackend::Stub { seed } => stub_feature(h, t, *seed, self.dim),
            GeneratedBackend::Fixture(map) => map
                .get(&(h.to_string(), t.to_string()))
                .cloned()
                .ok_or_else(|| Error::MissingFixture(format!("generated feature ({h}, {t})")))?,
        };
        self.cache
            .write()
            .expect("cache lock")
            .insert((head, tail), v.clone());
        Ok(v)
    }
}

/// Per-candidate input to the statement encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum StatementInput {
    /// A precomputed statement vector.
    Fixed(Vec<f64>),
    /// Hash buckets of the question and answer tokens.
    Bag(Vec<usize>),
}

#[derive(Debug, Clone)]
pub enum StatementProvider {
    Fixture {
        dim: usize,
        vectors: HashMap<(String, usize), Vec<f64>>,
    },
    /// Trainable mean-of-bucket-embeddings encoder over hashed tokens.
    HashedBag { buckets: usize, dim: usize },
}

impl StatementProvider {
    pub fn load_fixture(path: &Path) -> Result<Self> {
        let (dim, vectors) =
            parse_statement_fixture(&read_to_string(path)?, &path.display().to_string())?;
        Ok(StatementProvider::Fixture { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        match self {
            StatementProvider::Fixture { dim, .. } | StatementProvider::HashedBag { dim, .. } => {
                *dim
            }
        }
    }

    pub fn input(
        &self,
        example_id: &str,
        candidate: usize,
        question: &str,
        answer: &str,
    ) -> Result<StatementInput> {
        match self {
            StatementProvider::Fixture { vectors, .. } => vectors
                .get(&(example_id.to_string(), candidate))
                .cloned()
                .map(StatementInput::Fixed)
                .ok_or_else(|| {
                    Error::MissingFixture(format!("statement ({example_id}, {candidate})"))
                }),
            StatementProvider::HashedBag { buckets, .. } => {
                let ids = tokenize(question)
                    .into_iter()
                    .chain(tokenize(answer))
                    .map(|t| (fnv1a(t.text.as_bytes()) % *buckets as u64) as usize)
                    .collect();
                Ok(StatementInput::Bag(ids))
            }
        }
    }
}

/// Learnable graph-embedding parameters: entity and relation tables plus the adapter.
#[derive(Debug, Clone)]
pub struct GraphEmbedding {
    pub entities: EmbeddingTable,
    pub relations: EmbeddingTable,
    pub adapter: Mlp,
}

impl GraphEmbedding {
    /// `[n × d_ent]` node features in node order.
    pub fn node_features<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        graph: &ContextGraph,
    ) -> Result<Var> {
        let ids: Vec<usize> = graph.nodes.iter().map(|n| n.entity.0).collect();
        self.entities.lookup(tape, &ids)
    }

    /// Feature of one edge: relation row for extracted, adapter output for generated.
    pub fn edge_feature<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        source: FeatureSource,
        generated: Option<&[f64]>,
    ) -> Result<Var> {
        match source {
            FeatureSource::Extracted(r) => self.relations.row(tape, r.0),
            FeatureSource::Generated { head, tail } => {
                let v = generated.ok_or_else(|| {
                    Error::MissingFixture(format!("generated feature ({}, {})", head.0, tail.0))
                })?;
                let x = tape.constant(vec![1, v.len()], v.iter().map(|&x| lit(x)).collect())?;
                Ok(self.adapter.forward(tape, x)?)
            }
        }
    }

    /// `[m × d_rel]` edge features in edge order; `generated` holds one vector
    /// per generated edge, in edge order. `None` when the graph has no edges.
    pub fn edge_features<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        graph: &ContextGraph,
        generated: &[Vec<f64>],
    ) -> Result<Option<Var>> {
        let mut rels = Vec::new();
        let mut order = Vec::with_capacity(graph.m());
        let mut n_gen = 0;
        for e in &graph.edges {
            match e.source {
                FeatureSource::Extracted(r) => {
                    order.push((false, rels.len()));
                    rels.push(r.0);
                }
                FeatureSource::Generated { .. } => {
                    order.push((true, n_gen));
                    n_gen += 1;
                }
            }
        }
        if n_gen != generated.len() {
            return Err(Error::Argument(format!(
                "{n_gen} generated edges but {} vectors",
                generated.len()
            )));
        }
        let extracted = if rels.is_empty() {
            None
        } else {
            Some(self.relations.lookup(tape, &rels)?)
        };
        let adapted = if generated.is_empty() {
            None
        } else {
            let width = generated[0].len();
            let data = generated
                .iter()
                .flat_map(|v| v.iter().map(|&x| lit(x)))
                .collect();
            let x = tape.constant(vec![generated.len(), width], data)?;
            Some(self.adapter.forward(tape, x)?)
        };
        Ok(match (extracted, adapted) {
            (None, None) => None,
            (Some(x), None) | (None, Some(x)) => Some(x),
            (Some(x), Some(g)) => {
                let stacked = tape.concat(&[x, g], 0)?;
                let index: Vec<usize> = order
                    .iter()
                    .map(|&(is_gen, k)| if is_gen { rels.len() + k } else { k })
                    .collect();
                Some(tape.gather_rows(stacked, &index)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Activation;

    #[test]
    fn stub_is_deterministic_and_unit_norm() {
        let a = stub_feature("print", "use_paper", 3, 64);
        assert_eq!(a, stub_feature("print", "use_paper", 3, 64));
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_ne!(a, stub_feature("use_paper", "print", 3, 64));
        assert_ne!(a, stub_feature("print", "use_paper", 4, 64));
    }

    #[test]
    fn stub_matches_independent_recomputation() {
        // FNV-1a over seed bytes, head, 0x1f, tail; ChaCha8 stream; normalize.
        let mut h: u64 = 14695981039346656037;
        for b in 9u64
            .to_le_bytes()
            .iter()
            .chain(b"print")
            .chain(&[0x1f])
            .chain(b"use_paper")
        {
            h = (h ^ *b as u64).wrapping_mul(1099511628211);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let raw: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
        let n = raw.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        let expect: Vec<f64> = raw.iter().map(|x| x / n).collect();
        assert_eq!(stub_feature("print", "use_paper", 9, 16), expect);
    }

    #[test]
    fn prompt_formats() {
        assert_eq!(
            serialize_training_prompt("print", "requires", "use_paper"),
            "print $ use paper $ print requires use paper"
        );
        assert_eq!(
            serialize_generation_prompt("print", "use_paper"),
            "print $ use paper $"
        );
        assert_eq!(
            parse_training_prompt("print $ use paper $ print requires use paper"),
            Some(("print".into(), "requires".into(), "use_paper".into()))
        );
        assert_eq!(parse_training_prompt("print $ paper $"), None);
        assert_eq!(parse_training_prompt("a $ b $ c r b"), None);
    }

    #[test]
    fn embedding_file_round_trip_and_errors() {
        let text = write_embedding_file(2, 3, &[0.5, -1.0, 2.0, 0.0, 1e-3, 7.0]);
        let f = parse_embedding_file(&text, "emb").unwrap();
        assert_eq!((f.count, f.dim), (2, 3));
        assert_eq!(f.values[4], 1e-3);
        assert!(matches!(
            parse_embedding_file("2 2\n1 2\n3\n", "e"),
            Err(Error::Load { line: 3, .. })
        ));
        assert!(parse_embedding_file("2 2\n1 2\n", "e").is_err());
        assert!(parse_embedding_file("x\n", "e").is_err());
        assert!(parse_embedding_file("1 1\nnan\n", "e").is_err());
    }

    #[test]
    fn fixture_parsers() {
        let (dim, map) =
            parse_generated_fixture("print\tuse paper\t1 0 0\npaper\tink\t0 1 0\n", "g").unwrap();
        assert_eq!(dim, 3);
        assert_eq!(
            map[&("print".to_string(), "use_paper".to_string())],
            vec![1.0, 0.0, 0.0]
        );
        assert!(parse_generated_fixture("a\tb\t1 2\nc\td\t1\n", "g").is_err());
        let (dim, map) = parse_statement_fixture("q1\t0\t0.5 0.5\nq1\t1\t1 0\n", "s").unwrap();
        assert_eq!((dim, map.len()), (2, 2));
        assert!(parse_statement_fixture("q1\tx\t0.5\n", "s").is_err());
    }

    #[test]
    fn providers_report_missing_fixtures() {
        let kg = KnowledgeGraph::new(vec!["a".into(), "b".into()], vec!["r".into()], []).unwrap();
        let p = GeneratedFeatureProvider::fixture(2, HashMap::new());
        let err = p.feature(EntityId(0), EntityId(1), &kg).unwrap_err();
        assert!(matches!(err, Error::MissingFixture(ref s) if s.contains("(a, b)")));
        let s = StatementProvider::Fixture {
            dim: 2,
            vectors: HashMap::new(),
        };
        assert!(matches!(
            s.input("q", 0, "x", "y"),
            Err(Error::MissingFixture(_))
        ));
        let stub = GeneratedFeatureProvider::stub(1, 8);
        let v = stub.feature(EntityId(0), EntityId(1), &kg).unwrap();
        assert_eq!(v, stub_feature("a", "b", 1, 8));
        assert_eq!(v, stub.feature(EntityId(0), EntityId(1), &kg).unwrap());
    }

    #[test]
    fn hashed_bag_buckets_are_stable() {
        let p = StatementProvider::HashedBag {
            buckets: 32,
            dim: 4,
        };
        let a = p.input("q", 0, "Print on paper", "ink").unwrap();
        assert_eq!(a, p.input("other", 3, "print on PAPER", "ink").unwrap());
        let StatementInput::Bag(ids) = a else {
            panic!()
        };
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().all(|&b| b < 32));
    }

    fn embedding(store: &mut ParameterStore<f64>) -> GraphEmbedding {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        GraphEmbedding {
            entities: EmbeddingTable::new(store, "ent", 4, 3, None, &mut rng).unwrap(),
            relations: EmbeddingTable::new(store, "rel", 3, 2, None, &mut rng).unwrap(),
            adapter: Mlp::new(store, "adapt", &[5, 2, 2], Activation::Relu, &mut rng).unwrap(),
        }
    }

    #[test]
    fn table_rows_and_file_init() {
        let mut store = ParameterStore::<f64>::new();
        let file = EmbeddingFile {
            count: 2,
            dim: 2,
            values: vec![1.0, 2.0, 3.0, 4.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = EmbeddingTable::new(&mut store, "e", 2, 2, Some(&file), &mut rng).unwrap();
        assert!(EmbeddingTable::new(&mut store, "f", 3, 2, Some(&file), &mut rng).is_err());
        let mut tape = Tape::with_params(&store);
        let r0 = t.row(&mut tape, 0).unwrap();
        assert_eq!(tape.value(r0), &[1.0, 2.0]);
        assert!(t.row(&mut tape, 2).is_err());
        // grad of sum(row k) is one exactly on row k; two uses accumulate
        let r1 = t.row(&mut tape, 1).unwrap();
        let r1b = t.row(&mut tape, 1).unwrap();
        let both = tape.add(r1, r1b).unwrap();
        let s = tape.sum(both).unwrap();
        let g = tape.backward(s).unwrap().into_param_grads(&tape);
        assert_eq!(g, vec![(t.id, vec![0.0, 0.0, 2.0, 2.0])]);
    }

    #[test]
    fn edge_features_follow_source() {
        let mut store = ParameterStore::<f64>::new();
        let emb = embedding(&mut store);
        let mut tape = Tape::with_params(&store);
        let r2 = emb
            .edge_feature(
                &mut tape,
                FeatureSource::Extracted(crate::kg::RelationId(2)),
                None,
            )
            .unwrap();
        assert_eq!(tape.value(r2), store.get(emb.relations.id).row(2));
        drop(tape);
        for id in emb.adapter.layers().iter().flat_map(|&(w, b)| [w, b]) {
            store
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|x| *x = 0.0);
        }
        let mut tape = Tape::with_params(&store);
        let gen = FeatureSource::Generated {
            head: EntityId(0),
            tail: EntityId(1),
        };
        let v = stub_feature("a", "b", 0, 5);
        let y = emb.edge_feature(&mut tape, gen, Some(&v)).unwrap();
        assert_eq!(tape.value(y), &[0.0, 0.0]);
    }

    #[test]
    fn mixed_edge_features_keep_edge_order() {
        use crate::graph::{Edge, Node, Side};
        let mut store = ParameterStore::<f64>::new();
        let emb = embedding(&mut store);
        let gen = |h, t| FeatureSource::Generated {
            head: EntityId(h),
            tail: EntityId(t),
        };
        let graph = ContextGraph {
            nodes: vec![
                Node {
                    entity: EntityId(0),
                    side: Side::Question,
                },
                Node {
                    entity: EntityId(1),
                    side: Side::Answer,
                },
            ],
            edges: vec![
                Edge {
                    src: 0,
                    dst: 1,
                    source: gen(0, 1),
                },
                Edge {
                    src: 1,
                    dst: 0,
                    source: FeatureSource::Extracted(crate::kg::RelationId(1)),
                },
                Edge {
                    src: 0,
                    dst: 1,
                    source: gen(1, 0),
                },
            ],
        };
        let vecs = vec![stub_feature("a", "b", 0, 5), stub_feature("b", "a", 0, 5)];
        let mut tape = Tape::with_params(&store);
        let all = emb
            .edge_features(&mut tape, &graph, &vecs)
            .unwrap()
            .unwrap();
        assert_eq!(tape.shape(all), &[3, 2]);
        for (k, e) in graph.edges.iter().enumerate() {
            let gv = match e.source {
                FeatureSource::Generated { .. } => {
                    Some(vecs[if k == 0 { 0 } else { 1 }].as_slice())
                }
                _ => None,
            };
            let single = emb.edge_feature(&mut tape, e.source, gv).unwrap();
            assert_eq!(&tape.value(all)[k * 2..k * 2 + 2], tape.value(single));
        }
        // generator outputs are constants: nothing upstream of the adapter input gets a gradient
        let s = tape.sum(all).unwrap();
        let grads = tape.backward(s).unwrap().into_param_grads(&tape);
        let adapter_ids: Vec<ParamId> = emb
            .adapter
            .layers()
            .iter()
            .flat_map(|&(w, b)| [w, b])
            .collect();
        assert!(grads
            .iter()
            .all(|(id, _)| *id == emb.relations.id || adapter_ids.contains(id)));
    }
}
