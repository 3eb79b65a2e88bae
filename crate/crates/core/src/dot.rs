//! Graphviz export of a weighted candidate graph.
//!
//! Edge darkness is proportional to weight relative to the heaviest edge
//! (`gray0` is black). Edges below the prune threshold are dashed.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{write_file, Error, Result};
use crate::graph::{ContextGraph, FeatureSource, Side};
use crate::kg::KnowledgeGraph;

pub const HEADER: &str = "digraph hgn {\n";

/// Quotes `s` as a DOT string literal.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Graphviz gray level in `0..=100` for `weight`; 0 is black.
pub fn gray_level(weight: f64, max_weight: f64) -> u32 {
    if max_weight <= 0.0 {
        return 100;
    }
    let darkness = (weight / max_weight).clamp(0.0, 1.0);
    (100.0 * (1.0 - darkness)).round() as u32
}

/// Renders `graph` with `weights` aligned to its edges. Empty weights render
/// the header and closing brace only.
pub fn to_dot(
    graph: &ContextGraph,
    kg: &KnowledgeGraph,
    weights: &[f64],
    threshold: f64,
) -> Result<String> {
    let mut out = String::from(HEADER);
    if weights.is_empty() {
        out.push_str("}\n");
        return Ok(out);
    }
    if weights.len() != graph.m() {
        return Err(Error::Argument(format!(
            "{} weights for {} edges",
            weights.len(),
            graph.m()
        )));
    }
    let max_weight = weights.iter().copied().fold(0.0, f64::max);
    out.push_str("  rankdir=LR;\n  node [shape=box];\n");
    for (i, node) in graph.nodes.iter().enumerate() {
        let side = match node.side {
            Side::Question => "q",
            Side::Answer => "a",
        };
        let label = format!("{} ({side})", kg.entity_name(node.entity));
        let _ = writeln!(out, "  n{i} [label={}];", quote(&label));
    }
    for (e, &w) in graph.edges.iter().zip(weights) {
        let label = match e.source {
            FeatureSource::Extracted(r) => kg.relation_name(r).to_string(),
            FeatureSource::Generated { .. } => "gen".to_string(),
        };
        let gray = gray_level(w, max_weight);
        let style = if w < threshold { "dashed" } else { "solid" };
        let _ = writeln!(
            out,
            "  n{} -> n{} [label={}, color=\"gray{gray}\", fontcolor=\"gray{gray}\", style={style}, tooltip=\"{w:.6}\"];",
            e.src,
            e.dst,
            quote(&label)
        );
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn export_dot(
    graph: &ContextGraph,
    kg: &KnowledgeGraph,
    weights: &[f64],
    threshold: f64,
    path: &Path,
) -> Result<()> {
    write_file(path, to_dot(graph, kg, weights, threshold)?)
}
