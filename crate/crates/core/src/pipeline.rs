//! Turns raw examples into model inputs: grounding, graph construction,
//! generator lookups, and statement inputs. Runs once per dataset.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rayon::prelude::*;

use crate::dataset::Example;
use crate::encoder::CandidateInput;
use crate::error::{Error, Result};
use crate::features::{GeneratedFeatureProvider, StatementInput, StatementProvider};
use crate::graph::{ContextGraph, EdgeFeatureMode, FeatureSource, MultiRelationPolicy};
use crate::grounding::Grounder;
use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    pub id: String,
    pub gold: usize,
    pub candidates: Vec<CandidateInput>,
}

#[derive(Debug)]
pub struct Pipeline {
    pub kg: KnowledgeGraph,
    pub grounder: Grounder,
    pub policy: MultiRelationPolicy,
    pub mode: EdgeFeatureMode,
    pub generated: GeneratedFeatureProvider,
    /// `None` when the model ignores statement vectors.
    pub statements: Option<StatementProvider>,
}

impl Pipeline {
    /// Builds the candidate graph; a degenerate grounding yields the empty graph.
    pub fn graph(&self, question: &str, answer: &str) -> Result<ContextGraph> {
        let gr = self.grounder.ground_pair(question, answer, &self.kg);
        match ContextGraph::build(&gr, &self.kg, self.policy) {
            Err(Error::DegenerateGraph(_)) => Ok(ContextGraph::default()),
            other => other,
        }
    }

    pub fn prepare(&self, ex: &Example) -> Result<PreparedExample> {
        let mut candidates = Vec::with_capacity(ex.candidates.len());
        for (k, answer) in ex.candidates.iter().enumerate() {
            let graph = self.graph(&ex.question, answer)?;
            let mut generated = HashMap::new();
            for e in &graph.edges {
                let pair = match (e.source, self.mode) {
                    (_, EdgeFeatureMode::ExtractedOnly) => None,
                    (FeatureSource::Generated { head, tail }, _) => Some((head, tail)),
                    (FeatureSource::Extracted(_), EdgeFeatureMode::GeneratedOnly) => {
                        Some((graph.nodes[e.src].entity, graph.nodes[e.dst].entity))
                    }
                    (FeatureSource::Extracted(_), _) => None,
                };
                if let Some((h, t)) = pair {
                    if let Entry::Vacant(slot) = generated.entry((h, t)) {
                        slot.insert(self.generated.feature(h, t, &self.kg)?);
                    }
                }
            }
            let statement = match &self.statements {
                Some(p) => p.input(&ex.id, k, &ex.question, answer)?,
                None => StatementInput::Bag(Vec::new()),
            };
            candidates.push(CandidateInput {
                graph,
                generated,
                statement,
            });
        }
        Ok(PreparedExample {
            id: ex.id.clone(),
            gold: ex.gold,
            candidates,
        })
    }

    /// Prepares every example in parallel; output order matches input order.
    pub fn prepare_all(&self, examples: &[Example]) -> Result<Vec<PreparedExample>> {
        examples.par_iter().map(|ex| self.prepare(ex)).collect()
    }
}
