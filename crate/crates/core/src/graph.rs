//! Per-(question, candidate) contextualized graph: fully connected bipartite
//! edges between question-side and answer-side concepts, each tagged with the
//! source of its feature vector.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grounding::GroundingResult;
use crate::kg::{EntityId, KnowledgeGraph, RelationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Question,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub entity: EntityId,
    pub side: Side,
}

/// Where an edge's feature vector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSource {
    /// Relation embedding of a KG relation.
    Extracted(RelationId),
    /// Frozen generator output for the ordered concept pair, passed through the adapter.
    Generated { head: EntityId, tail: EntityId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub source: FeatureSource,
}

/// How pairs with several KG relations are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiRelationPolicy {
    /// Extracted only when exactly one relation links the pair.
    #[default]
    LiteralUnique,
    /// Extracted with the lowest relation id whenever any relation links the pair.
    FirstByPriority,
}

/// Which edge feature sources the encoder sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeFeatureMode {
    #[default]
    Hybrid,
    /// Generated edges are removed.
    ExtractedOnly,
    /// Every edge uses the generator, KG relations are ignored.
    GeneratedOnly,
}

pub fn classify_pair(
    head: EntityId,
    tail: EntityId,
    kg: &KnowledgeGraph,
    policy: MultiRelationPolicy,
) -> FeatureSource {
    let rels = kg.relations_between(head, tail).unwrap_or(&[]);
    match (policy, rels) {
        (MultiRelationPolicy::LiteralUnique, [only]) => FeatureSource::Extracted(*only),
        (MultiRelationPolicy::FirstByPriority, [first, ..]) => FeatureSource::Extracted(*first),
        _ => FeatureSource::Generated { head, tail },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl ContextGraph {
    /// Question nodes in grounding order, then answer nodes; an edge for every
    /// ordered cross-side pair of distinct entities, in `(src, dst)` row-major order.
    pub fn build(
        gr: &GroundingResult,
        kg: &KnowledgeGraph,
        policy: MultiRelationPolicy,
    ) -> Result<Self> {
        if gr.question.is_empty() || gr.answer.is_empty() {
            return Err(Error::DegenerateGraph(format!(
                "{} question and {} answer concepts",
                gr.question.len(),
                gr.answer.len()
            )));
        }
        let nodes: Vec<Node> = gr
            .question
            .ids
            .iter()
            .map(|&entity| Node {
                entity,
                side: Side::Question,
            })
            .chain(gr.answer.ids.iter().map(|&entity| Node {
                entity,
                side: Side::Answer,
            }))
            .collect();
        let mut edges = Vec::new();
        for (i, a) in nodes.iter().enumerate() {
            for (j, b) in nodes.iter().enumerate() {
                if a.side != b.side && a.entity != b.entity {
                    let source = classify_pair(a.entity, b.entity, kg, policy);
                    edges.push(Edge {
                        src: i,
                        dst: j,
                        source,
                    });
                }
            }
        }
        Ok(ContextGraph { nodes, edges })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn num_side(&self, side: Side) -> usize {
        self.nodes.iter().filter(|n| n.side == side).count()
    }

    /// Applies an edge feature ablation.
    pub fn restrict(&self, mode: EdgeFeatureMode) -> ContextGraph {
        let edges = match mode {
            EdgeFeatureMode::Hybrid => self.edges.clone(),
            EdgeFeatureMode::ExtractedOnly => self
                .edges
                .iter()
                .filter(|e| matches!(e.source, FeatureSource::Extracted(_)))
                .copied()
                .collect(),
            EdgeFeatureMode::GeneratedOnly => self
                .edges
                .iter()
                .map(|e| Edge {
                    source: FeatureSource::Generated {
                        head: self.nodes[e.src].entity,
                        tail: self.nodes[e.dst].entity,
                    },
                    ..*e
                })
                .collect(),
        };
        ContextGraph {
            nodes: self.nodes.clone(),
            edges,
        }
    }

    /// Dense 0/1 adjacency, `a[i][j] = 1` iff there is an edge `i -> j`.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0; self.n()]; self.n()];
        for e in &self.edges {
            a[e.src][e.dst] = 1;
        }
        a
    }

    /// Debug dump with entity and relation names; `weights` aligns with `edges`.
    pub fn to_json(&self, kg: &KnowledgeGraph, weights: Option<&[f64]>) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                json!({"index": i, "entity": kg.entity_name(n.entity), "entity_id": n.entity.0, "side": n.side})
            })
            .collect();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let mut v = match e.source {
                    FeatureSource::Extracted(r) => json!({
                        "src": e.src, "dst": e.dst, "source": "extracted",
                        "relation": kg.relation_name(r), "relation_id": r.0,
                    }),
                    FeatureSource::Generated { head, tail } => json!({
                        "src": e.src, "dst": e.dst, "source": "generated",
                        "head": kg.entity_name(head), "tail": kg.entity_name(tail),
                    }),
                };
                if let Some(w) = weights.and_then(|w| w.get(k)) {
                    v["weight"] = json!(w);
                }
                v
            })
            .collect();
        json!({"nodes": nodes, "edges": edges})
    }
}
