//! Graph encoder: layered edge/node propagation with learnable, globally
//! normalized edge weights, statement-conditioned attention pooling, and
//! candidate scoring.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EmbeddingFile, EmbeddingTable, GraphEmbedding, StatementInput};
use crate::graph::{ContextGraph, EdgeFeatureMode, FeatureSource, Side};
use crate::kg::EntityId;
use crate::params::{ParamId, ParameterStore};
use crate::tensor::{lit, Activation, Mlp, Real, Tape, Var};

/// Raw edge scores are clamped into `[-W_CLAMP, W_CLAMP]` before normalization.
pub const W_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeWeighting {
    #[default]
    Learned,
    /// Every edge weight is 1, unnormalized.
    FixedOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightNorm {
    /// One softmax over every edge of the graph.
    #[default]
    Global,
    /// One softmax per destination node.
    PerNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HgnConfig {
    pub layers: usize,
    pub d_ent: usize,
    pub d_rel: usize,
    pub d_gen: usize,
    pub d_s: usize,
    pub d_h: usize,
    pub edge_weighting: EdgeWeighting,
    pub edge_features: EdgeFeatureMode,
    pub use_statement_vector: bool,
    pub activation: Activation,
    pub weight_norm: WeightNorm,
}

impl Default for HgnConfig {
    fn default() -> Self {
        HgnConfig {
            layers: 2,
            d_ent: 64,
            d_rel: 64,
            d_gen: 64,
            d_s: 64,
            d_h: 64,
            edge_weighting: EdgeWeighting::Learned,
            edge_features: EdgeFeatureMode::Hybrid,
            use_statement_vector: true,
            activation: Activation::Relu,
            weight_norm: WeightNorm::Global,
        }
    }
}

impl HgnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.layers) {
            return Err(Error::Config(format!(
                "layers must be in 1..=5, got {}",
                self.layers
            )));
        }
        for (name, d) in [
            ("d_ent", self.d_ent),
            ("d_rel", self.d_rel),
            ("d_gen", self.d_gen),
            ("d_s", self.d_s),
            ("d_h", self.d_h),
        ] {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// The four per-layer MLPs.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub v2e: Mlp,
    pub w: Mlp,
    pub u: Mlp,
    pub e2v: Mlp,
}

/// Initial values for the entity and relation tables.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingInit {
    pub entities: Option<EmbeddingFile>,
    pub relations: Option<EmbeddingFile>,
}

/// Parameter handles of a full model; values live in the store.
#[derive(Debug, Clone)]
pub struct Hgn {
    pub cfg: HgnConfig,
    pub embedding: GraphEmbedding,
    pub layers: Vec<LayerParams>,
    /// `[d_s × d_h]`.
    pub w_att: ParamId,
    /// `[1 × d_s]` attention query used in place of `s` when statements are disabled.
    pub att_query: Option<ParamId>,
    pub scorer: Mlp,
    /// Bucket table of the hashed bag-of-words statement encoder.
    pub text: Option<EmbeddingTable>,
}

/// One candidate's model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateInput {
    /// Unrestricted graph; an empty node list marks a degenerate graph.
    pub graph: ContextGraph,
    /// Generator vectors keyed by ordered concept pair; covers every pair the
    /// configured edge feature mode turns into a generated edge.
    pub generated: HashMap<(EntityId, EntityId), Vec<f64>>,
    pub statement: StatementInput,
}

/// Per-layer edge weights of one graph; empty for a degenerate graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeWeightState {
    /// Raw scores `w^l` after clamping; empty under fixed weights.
    pub raw: Vec<Vec<f64>>,
    /// Weights `A^l` over the edge list.
    pub weights: Vec<Vec<f64>>,
}

impl EdgeWeightState {
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Final-layer weights, or an empty vector for a degenerate graph.
pub fn final_edge_weights(state: &EdgeWeightState) -> Vec<f64> {
    state.weights.last().cloned().unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct EncodedGraph {
    /// `[1 × d_h]`.
    pub g: Var,
    /// `[n × d_h]` final node states; `None` for a degenerate graph.
    pub nodes: Option<Var>,
    /// Final-layer weight variable; `None` for degenerate or edgeless graphs.
    pub final_weights: Option<Var>,
    pub state: EdgeWeightState,
    /// The graph actually encoded, after the edge feature restriction.
    pub graph: ContextGraph,
}

#[derive(Debug, Clone)]
pub struct ExampleForward {
    /// `[1 × k]` probabilities over candidates.
    pub probs: Var,
    pub graphs: Vec<EncodedGraph>,
}

fn is_degenerate(graph: &ContextGraph) -> bool {
    graph.num_side(Side::Question) == 0 || graph.num_side(Side::Answer) == 0
}

impl Hgn {
    /// Registers every parameter in a fixed order so the RNG stream is reproducible.
    pub fn new<T: Real>(
        store: &mut ParameterStore<T>,
        cfg: &HgnConfig,
        num_entities: usize,
        num_relations: usize,
        text_buckets: Option<usize>,
        init: &EmbeddingInit,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let act = cfg.activation;
        let entities = EmbeddingTable::new(
            store,
            "ent",
            num_entities,
            cfg.d_ent,
            init.entities.as_ref(),
            rng,
        )?;
        let relations = EmbeddingTable::new(
            store,
            "rel",
            num_relations,
            cfg.d_rel,
            init.relations.as_ref(),
            rng,
        )?;
        let adapter = Mlp::new(store, "adapt", &[cfg.d_gen, cfg.d_rel, cfg.d_rel], act, rng)?;
        let ds = if cfg.use_statement_vector { cfg.d_s } else { 0 };
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 1..=cfg.layers {
            let (dn, de) = if l == 1 {
                (cfg.d_ent, cfg.d_rel)
            } else {
                (cfg.d_h, cfg.d_h)
            };
            let h = cfg.d_h;
            layers.push(LayerParams {
                v2e: Mlp::new(
                    store,
                    &format!("layer{l}.v2e"),
                    &[2 * dn + de + ds, h, h],
                    act,
                    rng,
                )?,
                w: Mlp::new(store, &format!("layer{l}.w"), &[de + ds, h, 1], act, rng)?,
                u: Mlp::new(store, &format!("layer{l}.u"), &[dn + h, h, h], act, rng)?,
                e2v: Mlp::new(store, &format!("layer{l}.e2v"), &[h, h, h], act, rng)?,
            });
        }
        let w_att = store.add_glorot("att.weight", cfg.d_s, cfg.d_h, rng)?;
        let att_query = if cfg.use_statement_vector {
            None
        } else {
            Some(store.add_normal("att.query", vec![1, cfg.d_s], 1.0, rng)?)
        };
        let scorer = Mlp::new(store, "score", &[ds + cfg.d_h, cfg.d_h, 1], act, rng)?;
        let text = match (cfg.use_statement_vector, text_buckets) {
            (true, Some(b)) => Some(EmbeddingTable::new(
                store,
                "text.buckets",
                b,
                cfg.d_s,
                None,
                rng,
            )?),
            _ => None,
        };
        Ok(Hgn {
            cfg: cfg.clone(),
            embedding: GraphEmbedding {
                entities,
                relations,
                adapter,
            },
            layers,
            w_att,
            att_query,
            scorer,
            text,
        })
    }

    /// `[1 × d_s]` statement vector, or `None` when statements are disabled.
    pub fn statement<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        input: &StatementInput,
    ) -> Result<Option<Var>> {
        if !self.cfg.use_statement_vector {
            return Ok(None);
        }
        let s = match input {
            StatementInput::Fixed(v) => {
                if v.len() != self.cfg.d_s {
                    return Err(Error::Argument(format!(
                        "statement width {} vs d_s {}",
                        v.len(),
                        self.cfg.d_s
                    )));
                }
                tape.constant(vec![1, v.len()], v.iter().map(|&x| lit(x)).collect())?
            }
            StatementInput::Bag(ids) => {
                let table = self.text.ok_or_else(|| {
                    Error::State("hashed statement input without a bucket table".into())
                })?;
                if ids.is_empty() {
                    tape.constant(vec![1, self.cfg.d_s], vec![T::zero(); self.cfg.d_s])?
                } else {
                    let rows = table.lookup(tape, ids)?;
                    let k = ids.len();
                    let mean = tape.constant(vec![1, k], vec![lit(1.0 / k as f64); k])?;
                    tape.matmul(mean, rows)?
                }
            }
        };
        Ok(Some(s))
    }

    /// Applies the configured edge feature restriction and lists the
    /// generator vectors of the remaining generated edges in edge order.
    pub fn restrict_input(&self, input: &CandidateInput) -> Result<(ContextGraph, Vec<Vec<f64>>)> {
        let graph = input.graph.restrict(self.cfg.edge_features);
        let generated = graph
            .edges
            .iter()
            .filter_map(|e| match e.source {
                FeatureSource::Generated { head, tail } => {
                    Some(input.generated.get(&(head, tail)).cloned().ok_or_else(|| {
                        Error::MissingFixture(format!("generated feature ({}, {})", head.0, tail.0))
                    }))
                }
                FeatureSource::Extracted(_) => None,
            })
            .collect::<Result<_>>()?;
        Ok((graph, generated))
    }

    /// Encodes one graph whose edge features already match the configuration.
    pub fn encode_graph<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        graph: &ContextGraph,
        generated: &[Vec<f64>],
        s: Option<Var>,
    ) -> Result<EncodedGraph> {
        let d_h = self.cfg.d_h;
        if is_degenerate(graph) {
            let g = tape.constant(vec![1, d_h], vec![T::zero(); d_h])?;
            return Ok(EncodedGraph {
                g,
                nodes: None,
                final_weights: None,
                state: EdgeWeightState::default(),
                graph: graph.clone(),
            });
        }
        let (n, m) = (graph.n(), graph.m());
        let mut h = self.embedding.node_features(tape, graph)?;
        let mut he = self.embedding.edge_features(tape, graph, generated)?;
        let src: Vec<usize> = graph.edges.iter().map(|e| e.src).collect();
        let dst: Vec<usize> = graph.edges.iter().map(|e| e.dst).collect();
        let s_rep = match (s, m) {
            (Some(s), m) if m > 0 => Some(tape.gather_rows(s, &vec![0; m])?),
            _ => None,
        };
        let mut state = EdgeWeightState::default();
        let mut final_weights = None;
        for layer in &self.layers {
            let Some(he_prev) = he else {
                // no edges: every node aggregates an empty message set
                let zero = tape.constant(vec![n, d_h], vec![T::zero(); n * d_h])?;
                h = layer.e2v.forward(tape, zero)?;
                continue;
            };
            let hi = tape.gather_rows(h, &src)?;
            let hj = tape.gather_rows(h, &dst)?;
            let mut parts = vec![hi, hj, he_prev];
            parts.extend(s_rep);
            let cat = tape.concat(&parts, 1)?;
            let he_new = layer.v2e.forward(tape, cat)?;

            let a = match self.cfg.edge_weighting {
                EdgeWeighting::Learned => {
                    let mut wparts = vec![he_prev];
                    wparts.extend(s_rep);
                    let wcat = tape.concat(&wparts, 1)?;
                    let w = layer.w.forward(tape, wcat)?;
                    let w = tape.clamp(w, lit(-W_CLAMP), lit(W_CLAMP))?;
                    let w = tape.reshape(w, vec![m])?;
                    let a = match self.cfg.weight_norm {
                        WeightNorm::Global => tape.softmax(w)?,
                        WeightNorm::PerNode => tape.segment_softmax(w, &dst)?,
                    };
                    state
                        .raw
                        .push(tape.value(w).iter().map(|x| x.to_f64_lossy()).collect());
                    a
                }
                EdgeWeighting::FixedOne => tape.constant(vec![m], vec![T::one(); m])?,
            };
            state
                .weights
                .push(tape.value(a).iter().map(|x| x.to_f64_lossy()).collect());
            final_weights = Some(a);

            let hi = tape.gather_rows(h, &src)?;
            let ucat = tape.concat(&[hi, he_new], 1)?;
            let u = layer.u.forward(tape, ucat)?;
            let msg = tape.scale_rows(u, a)?;
            let agg = tape.scatter_add_rows(msg, &dst, n)?;
            h = layer.e2v.forward(tape, agg)?;
            he = Some(he_new);
        }
        let query = match (s, self.att_query) {
            (Some(s), _) => s,
            (None, Some(q)) => tape.param(q),
            (None, None) => return Err(Error::State("no attention query".into())),
        };
        let watt = tape.param(self.w_att);
        let q = tape.matmul(query, watt)?;
        let qt = tape.transpose(q)?;
        let alpha = tape.matmul(h, qt)?;
        let alpha = tape.reshape(alpha, vec![1, n])?;
        let p = tape.softmax(alpha)?;
        let g = tape.matmul(p, h)?;
        Ok(EncodedGraph {
            g,
            nodes: Some(h),
            final_weights,
            state,
            graph: graph.clone(),
        })
    }

    /// Softmax over `f_MLP([s_i; g_i])`, `[1 × k]`.
    pub fn score_candidates<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        s_list: &[Option<Var>],
        g_list: &[Var],
    ) -> Result<Var> {
        let k = g_list.len();
        if k < 2 || s_list.len() != k {
            return Err(Error::Argument(format!(
                "need at least 2 candidates with one statement each, got {k} graphs and {} statements",
                s_list.len()
            )));
        }
        let rows = s_list
            .iter()
            .zip(g_list)
            .map(|(s, &g)| match s {
                Some(s) => Ok(tape.concat(&[*s, g], 1)?),
                None => Ok(g),
            })
            .collect::<Result<Vec<_>>>()?;
        let x = tape.concat(&rows, 0)?;
        let rho = self.scorer.forward(tape, x)?;
        let rho = tape.reshape(rho, vec![1, k])?;
        Ok(tape.softmax(rho)?)
    }

    /// Full forward pass over one example's candidates.
    pub fn forward_example<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        candidates: &[CandidateInput],
    ) -> Result<ExampleForward> {
        let mut s_list = Vec::with_capacity(candidates.len());
        let mut g_list = Vec::with_capacity(candidates.len());
        let mut graphs = Vec::with_capacity(candidates.len());
        for c in candidates {
            let s = self.statement(tape, &c.statement)?;
            let (graph, generated) = self.restrict_input(c)?;
            let enc = self.encode_graph(tape, &graph, &generated, s)?;
            s_list.push(s);
            g_list.push(enc.g);
            graphs.push(enc);
        }
        let probs = self.score_candidates(tape, &s_list, &g_list)?;
        Ok(ExampleForward { probs, graphs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::stub_feature;
    use crate::graph::{Edge, Node};
    use crate::kg::RelationId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> HgnConfig {
        HgnConfig {
            d_ent: 4,
            d_rel: 3,
            d_gen: 5,
            d_s: 4,
            d_h: 6,
            ..HgnConfig::default()
        }
    }

    fn model(cfg: &HgnConfig) -> (ParameterStore<f64>, Hgn) {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Hgn::new(
            &mut store,
            cfg,
            6,
            3,
            None,
            &EmbeddingInit::default(),
            &mut rng,
        )
        .unwrap();
        (store, m)
    }

    fn bipartite(q: &[usize], a: &[usize]) -> (ContextGraph, Vec<Vec<f64>>) {
        let nodes: Vec<Node> = q
            .iter()
            .map(|&e| Node {
                entity: EntityId(e),
                side: Side::Question,
            })
            .chain(a.iter().map(|&e| Node {
                entity: EntityId(e),
                side: Side::Answer,
            }))
            .collect();
        let mut edges = Vec::new();
        let mut generated = Vec::new();
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                if nodes[i].side != nodes[j].side {
                    let source = if (i + j) % 3 == 0 {
                        FeatureSource::Extracted(RelationId((i + j) % 3))
                    } else {
                        generated.push(stub_feature(&i.to_string(), &j.to_string(), 0, 5));
                        FeatureSource::Generated {
                            head: nodes[i].entity,
                            tail: nodes[j].entity,
                        }
                    };
                    edges.push(Edge {
                        src: i,
                        dst: j,
                        source,
                    });
                }
            }
        }
        (ContextGraph { nodes, edges }, generated)
    }

    fn statement(tape: &mut Tape<'_, f64>, seed: u64) -> Var {
        tape.constant(vec![1, 4], stub_feature("s", &seed.to_string(), 1, 4))
            .unwrap()
    }

    #[test]
    fn weights_normalize_globally() {
        let (store, m) = model(&small_cfg());
        let (g, gen) = bipartite(&[0, 1, 2], &[3, 4]);
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let enc = m.encode_graph(&mut tape, &g, &gen, Some(s)).unwrap();
        assert_eq!(enc.state.weights.len(), 2);
        for a in &enc.state.weights {
            assert_eq!(a.len(), 12);
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(tape.shape(enc.g), &[1, 6]);
    }

    #[test]
    fn per_node_weights_normalize_per_destination() {
        let cfg = HgnConfig {
            weight_norm: WeightNorm::PerNode,
            ..small_cfg()
        };
        let (store, m) = model(&cfg);
        let (g, gen) = bipartite(&[0, 1], &[3, 4, 5]);
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let enc = m.encode_graph(&mut tape, &g, &gen, Some(s)).unwrap();
        let a = final_edge_weights(&enc.state);
        for j in 0..g.n() {
            let total: f64 = g
                .edges
                .iter()
                .zip(&a)
                .filter(|(e, _)| e.dst == j)
                .map(|(_, w)| w)
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_edge_has_unit_weight() {
        let (store, m) = model(&small_cfg());
        let nodes = vec![
            Node {
                entity: EntityId(0),
                side: Side::Question,
            },
            Node {
                entity: EntityId(1),
                side: Side::Answer,
            },
        ];
        let g = ContextGraph {
            nodes,
            edges: vec![Edge {
                src: 0,
                dst: 1,
                source: FeatureSource::Extracted(RelationId(1)),
            }],
        };
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let enc = m.encode_graph(&mut tape, &g, &[], Some(s)).unwrap();
        assert_eq!(enc.state.weights, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn fixed_one_weights_are_unnormalized() {
        let cfg = HgnConfig {
            edge_weighting: EdgeWeighting::FixedOne,
            ..small_cfg()
        };
        let (store, m) = model(&cfg);
        let (g, gen) = bipartite(&[0], &[3, 4]);
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let enc = m.encode_graph(&mut tape, &g, &gen, Some(s)).unwrap();
        assert_eq!(final_edge_weights(&enc.state), vec![1.0; 4]);
        assert!(enc.state.raw.is_empty());
    }

    #[test]
    fn degenerate_graph_encodes_to_zero() {
        let (store, m) = model(&small_cfg());
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let enc = m
            .encode_graph(&mut tape, &ContextGraph::default(), &[], Some(s))
            .unwrap();
        assert_eq!(tape.value(enc.g), &[0.0; 6]);
        assert!(enc.state.is_empty() && final_edge_weights(&enc.state).is_empty());
    }

    #[test]
    fn zero_attention_pools_the_mean() {
        let (mut store, m) = model(&small_cfg());
        store
            .get_mut(m.w_att)
            .data_mut()
            .iter_mut()
            .for_each(|x| *x = 0.0);
        let (g, gen) = bipartite(&[0, 1], &[3]);
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let enc = m.encode_graph(&mut tape, &g, &gen, Some(s)).unwrap();
        let gv = tape.value(enc.g);
        let h = tape.value(enc.nodes.unwrap());
        for d in 0..6 {
            let mean = (h[d] + h[6 + d] + h[12 + d]) / 3.0;
            assert!((gv[d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_candidates_score_uniformly() {
        let (store, m) = model(&small_cfg());
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let g = tape.constant(vec![1, 6], vec![0.3; 6]).unwrap();
        let p = m
            .score_candidates(&mut tape, &[Some(s); 4], &[g; 4])
            .unwrap();
        assert!(tape.value(p).iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!(m.score_candidates(&mut tape, &[Some(s)], &[g]).is_err());
    }

    #[test]
    fn statement_free_model_shrinks_inputs() {
        let cfg = HgnConfig {
            use_statement_vector: false,
            ..small_cfg()
        };
        let (store, m) = model(&cfg);
        assert_eq!(m.layers[0].v2e.input_width(), 2 * 4 + 3);
        assert_eq!(m.scorer.input_width(), 6);
        let (g, gen) = bipartite(&[0, 1], &[3, 4]);
        let mut tape = Tape::with_params(&store);
        let enc = m.encode_graph(&mut tape, &g, &gen, None).unwrap();
        let p = m
            .score_candidates(&mut tape, &[None, None], &[enc.g, enc.g])
            .unwrap();
        assert_eq!(tape.value(p), &[0.5, 0.5]);
    }

    #[test]
    fn extracted_only_drops_generated_edges() {
        let cfg = HgnConfig {
            edge_features: EdgeFeatureMode::ExtractedOnly,
            ..small_cfg()
        };
        let (store, m) = model(&cfg);
        let (g, _) = bipartite(&[0, 1], &[3, 4]);
        let input = CandidateInput {
            graph: g.clone(),
            generated: HashMap::new(),
            statement: StatementInput::Bag(vec![]),
        };
        let (r, rgen) = m.restrict_input(&input).unwrap();
        assert!(rgen.is_empty() && r.m() < g.m());
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        m.encode_graph(&mut tape, &r, &rgen, Some(s)).unwrap();
    }

    #[test]
    fn edgeless_graph_still_encodes() {
        let (store, m) = model(&small_cfg());
        let nodes = vec![
            Node {
                entity: EntityId(2),
                side: Side::Question,
            },
            Node {
                entity: EntityId(2),
                side: Side::Answer,
            },
        ];
        let g = ContextGraph {
            nodes,
            edges: vec![],
        };
        let mut tape = Tape::with_params(&store);
        let s = statement(&mut tape, 0);
        let enc = m.encode_graph(&mut tape, &g, &[], Some(s)).unwrap();
        assert!(enc.final_weights.is_none() && enc.state.is_empty());
        assert!(tape.value(enc.g).iter().all(|x| x.is_finite()));
    }
}
