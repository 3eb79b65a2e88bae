//! Evaluation metrics over prepared examples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{final_edge_weights, Hgn};
use crate::error::Result;
use crate::params::ParameterStore;
use crate::pipeline::PreparedExample;
use crate::tensor::{Real, Tape, LOG_FLOOR};

/// Default binarization threshold for prune rate.
pub const PRUNE_THRESHOLD: f64 = 0.01;

/// `-Σ a ln max(a, 1e-12)`; zero for an empty vector.
pub fn entropy(weights: &[f64]) -> f64 {
    weights
        .iter()
        .map(|&a| -(a * a.max(LOG_FLOOR).ln()))
        .sum::<f64>()
        + 0.0
}

/// Fraction of edges whose weight falls below `threshold`; zero when there are no edges.
pub fn prune_rate(weights: &[f64], threshold: f64) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let kept = weights.iter().filter(|&&a| a >= threshold).count();
    1.0 - kept as f64 / weights.len() as f64
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_entropy: f64,
    pub mean_prune_rate: f64,
    pub n: usize,
}

/// Model outputs for one example, detached from the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    /// Final-layer weights of each candidate's graph, empty when degenerate.
    pub weights: Vec<Vec<f64>>,
    pub gold: usize,
}

impl Prediction {
    pub fn gold_weights(&self) -> &[f64] {
        &self.weights[self.gold]
    }
}

pub fn predict<T: Real>(
    model: &Hgn,
    store: &ParameterStore<T>,
    ex: &PreparedExample,
) -> Result<Prediction> {
    let mut tape = Tape::with_params(store);
    let fwd = model.forward_example(&mut tape, &ex.candidates)?;
    let probs = tape
        .value(fwd.probs)
        .iter()
        .map(|x| x.to_f64_lossy())
        .collect();
    let weights = fwd
        .graphs
        .iter()
        .map(|g| final_edge_weights(&g.state))
        .collect();
    Ok(Prediction {
        probs,
        weights,
        gold: ex.gold,
    })
}

pub fn predict_all<T: Real>(
    model: &Hgn,
    store: &ParameterStore<T>,
    examples: &[PreparedExample],
) -> Result<Vec<Prediction>> {
    examples
        .par_iter()
        .map(|ex| predict(model, store, ex))
        .collect()
}

/// Accuracy plus entropy and prune rate averaged over gold-candidate graphs
/// that have at least one edge.
pub fn summarize(examples: &[PreparedExample], predictions: &[Prediction]) -> Metrics {
    let n = examples.len();
    let correct = examples
        .iter()
        .zip(predictions)
        .filter(|(ex, p)| argmax(&p.probs) == ex.gold)
        .count();
    let with_edges: Vec<&Prediction> = predictions
        .iter()
        .filter(|p| !p.gold_weights().is_empty())
        .collect();
    let mean = |f: &dyn Fn(&[f64]) -> f64| {
        if with_edges.is_empty() {
            0.0
        } else {
            with_edges.iter().map(|p| f(p.gold_weights())).sum::<f64>() / with_edges.len() as f64
        }
    };
    Metrics {
        accuracy: if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        },
        mean_entropy: mean(&entropy),
        mean_prune_rate: mean(&|w| prune_rate(w, PRUNE_THRESHOLD)),
        n,
    }
}

pub fn evaluate<T: Real>(
    model: &Hgn,
    store: &ParameterStore<T>,
    examples: &[PreparedExample],
) -> Result<Metrics> {
    Ok(summarize(examples, &predict_all(model, store, examples)?))
}
