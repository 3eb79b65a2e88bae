//! Central finite-difference check of the analytic gradient of the total loss.

use serde::Serialize;

use crate::dataset::Example;
use crate::encoder::Hgn;
use crate::error::Result;
use crate::features::{GeneratedFeatureProvider, StatementProvider};
use crate::graph::MultiRelationPolicy;
use crate::grounding::Grounder;
use crate::kg::{KgOptions, KnowledgeGraph};
use crate::params::ParameterStore;
use crate::pipeline::{Pipeline, PreparedExample};
use crate::tensor::Tape;
use crate::trainer::{example_gradients, total_loss};

/// Gradient norms below this are treated as exactly zero on both sides.
pub const ZERO_NORM: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub numel: usize,
    /// `‖a − n‖ / max(‖a‖, ‖n‖)` over the whole tensor; 0 when both norms vanish.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }
}

pub fn loss_value(
    model: &Hgn,
    store: &ParameterStore<f64>,
    ex: &PreparedExample,
    beta: f64,
) -> Result<f64> {
    let mut tape = Tape::with_params(store);
    let fwd = model.forward_example(&mut tape, &ex.candidates)?;
    let loss = total_loss(&mut tape, &fwd, ex.gold, beta)?;
    Ok(tape.item(loss))
}

/// Compares every element of every parameter's gradient against
/// `(L(θ + h) − L(θ − h)) / 2h`. Parameter values are restored afterwards.
pub fn check(
    model: &Hgn,
    store: &mut ParameterStore<f64>,
    ex: &PreparedExample,
    beta: f64,
    h: f64,
) -> Result<GradCheckReport> {
    let analytic = example_gradients(model, store, ex, beta)?;
    let mut params = Vec::with_capacity(store.len());
    for id in store.ids().collect::<Vec<_>>() {
        let numel = store.get(id).len();
        let zeros = vec![0.0; numel];
        let a = analytic
            .grads
            .iter()
            .find(|(pid, _)| *pid == id)
            .map_or(&zeros, |(_, g)| g);
        let mut numeric = Vec::with_capacity(numel);
        for i in 0..numel {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + h;
            let plus = loss_value(model, store, ex, beta);
            store.get_mut(id).data_mut()[i] = orig - h;
            let minus = loss_value(model, store, ex, beta);
            store.get_mut(id).data_mut()[i] = orig;
            numeric.push((plus? - minus?) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let (na, nn) = (norm(a), norm(&numeric));
        let scale = na.max(nn);
        params.push(ParamCheck {
            name: store.param(id).name.clone(),
            numel,
            rel_error: if scale < ZERO_NORM {
                0.0
            } else {
                norm(&diff) / scale
            },
            max_abs_error: diff.iter().map(|d| d.abs()).fold(0.0, f64::max),
            analytic_norm: na,
        });
    }
    Ok(GradCheckReport {
        loss: analytic.loss,
        params,
    })
}

/// Built-in instance: the question grounds to three concepts and each of the
/// two candidates to two, so every candidate graph is 3 × 2 with a mix of
/// extracted, multi-relation, and unlinked pairs.
pub fn fixture_kg() -> KnowledgeGraph {
    let entities = "fox\nden\nnight\nburrow\nhole\ntree\nnest\n";
    let relations = "at_location\nrelated_to\nis_a\n";
    let facts = "fox\tat_location\tburrow\n\
                 den\trelated_to\thole\n\
                 den\tis_a\thole\n\
                 night\trelated_to\tnest\n\
                 fox\tat_location\ttree\n\
                 fox\tis_a\ttree\n\
                 burrow\tis_a\tden\n";
    KnowledgeGraph::from_strs(facts, entities, relations, KgOptions::default())
        .expect("fixture KG is valid")
}

pub fn fixture_example() -> Example {
    Example {
        id: "gradcheck".into(),
        question: "Where does a fox sleep at night, in a den?".into(),
        candidates: vec!["a burrow or hole".into(), "a tree nest".into()],
        gold: 0,
    }
}

pub fn fixture_pipeline(
    kg: &KnowledgeGraph,
    d_gen: usize,
    statements: Option<StatementProvider>,
) -> Pipeline {
    Pipeline {
        grounder: Grounder::new(kg),
        kg: kg.clone(),
        policy: MultiRelationPolicy::LiteralUnique,
        mode: Default::default(),
        generated: GeneratedFeatureProvider::stub(0, d_gen),
        statements,
    }
}
