//! Symbolic knowledge graph: entity and relation vocabularies, facts, and a
//! directed `(head, tail) -> relations` index.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub usize);

/// A directed triple `(head, relation, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgOptions {
    /// Adds `<name>_inv` relations and the reversed copy of every fact.
    #[serde(default)]
    pub add_inverse_relations: bool,
}

/// Lowercases, trims, and joins whitespace or underscore runs with a single `_`.
pub fn normalize_concept(name: &str) -> String {
    name.split(|c: char| c.is_whitespace() || c == '_')
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    facts: Vec<Fact>,
    pair_index: HashMap<(EntityId, EntityId), Vec<RelationId>>,
}

/// Parses a vocabulary file: one name per line, line number is the id.
pub fn parse_vocab(text: &str, source_name: &str, normalize: bool) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let name = if normalize {
            normalize_concept(raw)
        } else {
            raw.trim().to_string()
        };
        if name.is_empty() {
            return Err(Error::load(source_name, i + 1, "empty vocabulary entry"));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::load(
                source_name,
                i + 1,
                format!("duplicate entry {name:?}"),
            ));
        }
        out.push(name);
    }
    Ok(out)
}

impl KnowledgeGraph {
    /// Builds a graph from vocabularies and already-resolved facts; duplicates are dropped.
    pub fn new(
        entities: Vec<String>,
        relations: Vec<String>,
        facts: impl IntoIterator<Item = Fact>,
    ) -> Result<Self> {
        let entity_index = index_names(&entities, EntityId, "entity")?;
        let relation_index = index_names(&relations, RelationId, "relation")?;
        let mut kg = KnowledgeGraph {
            entities,
            entity_index,
            relations,
            relation_index,
            facts: Vec::new(),
            pair_index: HashMap::new(),
        };
        let mut seen = HashSet::new();
        for f in facts {
            if f.head.0 >= kg.entities.len()
                || f.tail.0 >= kg.entities.len()
                || f.relation.0 >= kg.relations.len()
            {
                return Err(Error::Argument(format!("fact {f:?} outside vocabulary")));
            }
            if seen.insert(f) {
                kg.facts.push(f);
            }
        }
        kg.rebuild_index();
        Ok(kg)
    }

    /// Parses the three text inputs (facts TSV, entity vocabulary, relation vocabulary).
    pub fn from_strs(
        facts: &str,
        entities: &str,
        relations: &str,
        opts: KgOptions,
    ) -> Result<Self> {
        let entities = parse_vocab(entities, "entities", true)?;
        let relations = parse_vocab(relations, "relations", false)?;
        let entity_index = index_names(&entities, EntityId, "entity")?;
        let relation_index = index_names(&relations, RelationId, "relation")?;
        let mut parsed = Vec::new();
        for (i, line) in facts.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [h, r, t] = fields[..] else {
                return Err(Error::load(
                    "facts",
                    line_no,
                    format!("expected 3 tab-separated fields, got {}", fields.len()),
                ));
            };
            let head = lookup(&entity_index, &normalize_concept(h), "entity", line_no)?;
            let relation = lookup(&relation_index, r.trim(), "relation", line_no)?;
            let tail = lookup(&entity_index, &normalize_concept(t), "entity", line_no)?;
            parsed.push(Fact {
                head,
                relation,
                tail,
            });
        }
        let kg = KnowledgeGraph::new(entities, relations, parsed)?;
        Ok(if opts.add_inverse_relations {
            kg.with_inverse_relations()?
        } else {
            kg
        })
    }

    pub fn load(
        fact_path: &Path,
        entity_path: &Path,
        relation_path: &Path,
        opts: KgOptions,
    ) -> Result<Self> {
        let facts = read_to_string(fact_path)?;
        let entities = read_to_string(entity_path)?;
        let relations = read_to_string(relation_path)?;
        KnowledgeGraph::from_strs(&facts, &entities, &relations, opts).map_err(|e| match e {
            Error::Load {
                source_name,
                line,
                message,
            } => {
                let path = match source_name.as_str() {
                    "facts" => fact_path,
                    "entities" => entity_path,
                    _ => relation_path,
                };
                Error::Load {
                    source_name: path.display().to_string(),
                    line,
                    message,
                }
            }
            other => other,
        })
    }

    /// Appends `<r>_inv` for every relation and the reverse of every fact.
    /// Fails when an inverse name collides with an existing relation.
    pub fn with_inverse_relations(&self) -> Result<Self> {
        let n = self.relations.len();
        let mut relations = self.relations.clone();
        relations.extend(self.relations.iter().map(|r| format!("{r}_inv")));
        let inverse = self.facts.iter().map(|f| Fact {
            head: f.tail,
            relation: RelationId(f.relation.0 + n),
            tail: f.head,
        });
        let facts: Vec<Fact> = self.facts.iter().copied().chain(inverse).collect();
        KnowledgeGraph::new(self.entities.clone(), relations, facts)
    }

    fn rebuild_index(&mut self) {
        self.pair_index = build_pair_index(&self.facts);
    }

    /// Writes `(facts, entities, relations)` in the on-disk text formats.
    pub fn to_strings(&self) -> (String, String, String) {
        let mut facts = String::new();
        for f in &self.facts {
            let _ = writeln!(
                facts,
                "{}\t{}\t{}",
                self.entities[f.head.0], self.relations[f.relation.0], self.entities[f.tail.0]
            );
        }
        let vocab = |v: &[String]| v.iter().map(|s| format!("{s}\n")).collect::<String>();
        (facts, vocab(&self.entities), vocab(&self.relations))
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id.0]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations[id.0]
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    /// Looks up a concept after normalization.
    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(&normalize_concept(name)).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn pair_index(&self) -> &HashMap<(EntityId, EntityId), Vec<RelationId>> {
        &self.pair_index
    }

    /// Sorted relations `r` with `(head, r, tail)` in the graph; direction-sensitive.
    pub fn relations_between(&self, head: EntityId, tail: EntityId) -> Result<&[RelationId]> {
        let n = self.entities.len();
        if head.0 >= n || tail.0 >= n {
            return Err(Error::Argument(format!(
                "entity pair ({}, {}) out of range {n}",
                head.0, tail.0
            )));
        }
        Ok(self
            .pair_index
            .get(&(head, tail))
            .map_or(&[], Vec::as_slice))
    }
}

pub(crate) fn build_pair_index(facts: &[Fact]) -> HashMap<(EntityId, EntityId), Vec<RelationId>> {
    let mut index: HashMap<(EntityId, EntityId), Vec<RelationId>> = HashMap::new();
    for f in facts {
        index.entry((f.head, f.tail)).or_default().push(f.relation);
    }
    for rels in index.values_mut() {
        rels.sort_unstable();
        rels.dedup();
    }
    index
}

fn index_names<I: Copy>(
    names: &[String],
    mk: fn(usize) -> I,
    kind: &str,
) -> Result<HashMap<String, I>> {
    let mut map = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), mk(i)).is_some() {
            return Err(Error::Argument(format!("duplicate {kind} {n:?}")));
        }
    }
    Ok(map)
}

fn lookup<I: Copy>(map: &HashMap<String, I>, name: &str, kind: &str, line: usize) -> Result<I> {
    map.get(name)
        .copied()
        .ok_or_else(|| Error::load("facts", line, format!("unknown {kind} {name:?}")))
}
