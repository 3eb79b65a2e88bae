//! Objective, optimizer, and training loop.
//!
//! The per-example objective is `task + β · Σ_candidates entropy(A^L)`. A batch
//! loss is the mean of its examples' objectives. Per-example gradients are
//! computed on independent tapes in parallel and reduced in example order, so
//! results do not depend on thread scheduling.

use std::io::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::encoder::{ExampleForward, Hgn};
use crate::error::{Error, Result};
use crate::metrics::{entropy, evaluate, Metrics};
use crate::params::{ParamId, ParameterStore};
use crate::pipeline::PreparedExample;
use crate::tensor::{lit, Real, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub beta: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.01,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    // Negated comparisons so that NaN fails every check
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite non-negative number");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie strictly between 0 and 1");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn radam(&self) -> RadamConfig {
        RadamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RadamConfig {
    fn default() -> Self {
        RadamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `-ln max(p[gold], 1e-12)`.
pub fn task_loss<T: Real>(tape: &mut Tape<'_, T>, probs: Var, gold: usize) -> Result<Var> {
    let k = tape.value(probs).len();
    if gold >= k {
        return Err(Error::Argument(format!(
            "gold {gold} out of range for {k} candidates"
        )));
    }
    Ok(tape.neg_log_pick(probs, gold)?)
}

/// Entropy of final-layer weights; `None` for a degenerate or edgeless graph.
pub fn prune_loss<T: Real>(tape: &mut Tape<'_, T>, weights: Option<Var>) -> Result<Option<Var>> {
    weights
        .map(|w| tape.entropy(w).map_err(Error::from))
        .transpose()
}

/// `task + β · Σ_candidates prune`.
pub fn total_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    fwd: &ExampleForward,
    gold: usize,
    beta: f64,
) -> Result<Var> {
    let mut loss = task_loss(tape, fwd.probs, gold)?;
    if beta == 0.0 {
        return Ok(loss);
    }
    for g in &fwd.graphs {
        if let Some(p) = prune_loss(tape, g.final_weights)? {
            let scaled = tape.scale(p, lit(beta))?;
            loss = tape.add(loss, scaled)?;
        }
    }
    Ok(loss)
}

/// One rectified-Adam update of every parameter, then zeroes the gradients.
pub fn radam_step<T: Real>(store: &mut ParameterStore<T>, cfg: &RadamConfig) -> Result<()> {
    if let Some(p) = store.iter().find(|p| p.value.grad.is_none()) {
        return Err(Error::State(format!("missing gradient for {}", p.name)));
    }
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let rho_inf = 2.0 / (1.0 - b2) - 1.0;
    for p in store.iter_mut() {
        p.step += 1;
        let t = p.step as f64;
        let (b1t, b2t) = (b1.powf(t), b2.powf(t));
        let rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
        let rect = (rho_t > 4.0).then(|| {
            (((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                .sqrt()
        });
        let grad = p.value.grad.take().expect("checked above");
        let (one, b1_, b2_) = (T::one(), lit::<T>(b1), lit::<T>(b2));
        let (lr, eps) = (lit::<T>(cfg.lr), lit::<T>(cfg.eps));
        let (c1, c2) = (lit::<T>(1.0 - b1t), lit::<T>(1.0 - b2t));
        let values = p.value.data_mut();
        for i in 0..values.len() {
            let g = grad[i];
            p.m[i] = b1_ * p.m[i] + (one - b1_) * g;
            p.v[i] = b2_ * p.v[i] + (one - b2_) * g * g;
            let m_hat = p.m[i] / c1;
            values[i] = values[i]
                - match rect {
                    Some(r) => lr * lit::<T>(r) * m_hat / ((p.v[i] / c2).sqrt() + eps),
                    None => lr * m_hat,
                };
        }
        p.value.grad = Some(vec![T::zero(); values.len()]);
    }
    Ok(())
}

/// Loss and parameter gradients of one example on a fresh tape.
#[derive(Debug, Clone)]
pub struct ExampleGrad<T> {
    pub loss: f64,
    /// Entropy of the gold candidate's final weights, if it has edges.
    pub gold_entropy: Option<f64>,
    pub grads: Vec<(ParamId, Vec<T>)>,
}

pub fn example_gradients<T: Real>(
    model: &Hgn,
    store: &ParameterStore<T>,
    ex: &PreparedExample,
    beta: f64,
) -> Result<ExampleGrad<T>> {
    let mut tape = Tape::with_params(store);
    let fwd = model.forward_example(&mut tape, &ex.candidates)?;
    let loss = total_loss(&mut tape, &fwd, ex.gold, beta)?;
    let value = tape.item(loss).to_f64_lossy();
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss {
            example_id: ex.id.clone(),
            detail: format!("loss = {value}"),
        });
    }
    let gold_state = &fwd.graphs[ex.gold].state;
    let gold_entropy = gold_state.weights.last().map(|w| entropy(w));
    let grads = tape.backward(loss)?.into_param_grads(&tape);
    if let Some((id, _)) = grads.iter().find(|(_, g)| g.iter().any(|x| !x.is_finite())) {
        let name = store.param(*id).name.clone();
        return Err(Error::NonFiniteLoss {
            example_id: ex.id.clone(),
            detail: format!("non-finite gradient for {name}"),
        });
    }
    Ok(ExampleGrad {
        loss: value,
        gold_entropy,
        grads,
    })
}

/// Accumulates the mean gradient of `batch` into `store`; returns the summed loss.
pub fn accumulate_batch<T: Real>(
    model: &Hgn,
    store: &mut ParameterStore<T>,
    batch: &[&PreparedExample],
    beta: f64,
) -> Result<(f64, Vec<Option<f64>>)> {
    let results: Vec<ExampleGrad<T>> = {
        let frozen: &ParameterStore<T> = store;
        batch
            .par_iter()
            .map(|ex| example_gradients(model, frozen, ex, beta))
            .collect::<Result<_>>()?
    };
    let scale = lit::<T>(1.0 / batch.len() as f64);
    let mut total = 0.0;
    let mut entropies = Vec::with_capacity(results.len());
    for r in results {
        total += r.loss;
        entropies.push(r.gold_entropy);
        for (id, g) in &r.grads {
            store.accumulate(*id, g, scale);
        }
    }
    Ok((total, entropies))
}

/// One JSON Lines record per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean final-layer entropy of gold-candidate graphs seen during the epoch.
    pub train_mean_entropy: f64,
    pub dev: Option<Metrics>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Embedded verbatim in every checkpoint.
    pub config_json: String,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were checkpointed (best dev accuracy, else last).
    pub best_epoch: Option<usize>,
}

pub fn train<T: Real>(
    model: &Hgn,
    store: &mut ParameterStore<T>,
    train_set: &[PreparedExample],
    dev_set: Option<&[PreparedExample]>,
    cfg: &TrainConfig,
    outputs: &TrainOutputs,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let mut log = match &outputs.log {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            Some(std::fs::File::create(p).map_err(|e| Error::io(p, e))?)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let radam = cfg.radam();
    store.zero_grads();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: None,
    };
    let mut best_acc = f64::NEG_INFINITY;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut entropies = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, ents) = accumulate_batch(model, store, &batch, cfg.beta)?;
            loss_sum += loss;
            entropies.extend(ents.into_iter().flatten());
            if let Some(c) = cfg.clip_norm {
                let norm = store.grad_norm().to_f64_lossy();
                if norm > c {
                    store.scale_grads(lit(c / norm));
                }
            }
            radam_step(store, &radam)?;
        }
        let dev = dev_set.map(|d| evaluate(model, store, d)).transpose()?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_mean_entropy: if entropies.is_empty() {
                0.0
            } else {
                entropies.iter().sum::<f64>() / entropies.len() as f64
            },
            dev,
        };
        if let (Some(f), Some(p)) = (log.as_mut(), &outputs.log) {
            writeln!(f, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(p, e))?;
        }
        let improved = match record.dev {
            Some(m) => m.accuracy > best_acc,
            None => true,
        };
        if improved {
            best_acc = record.dev.map_or(best_acc, |m| m.accuracy);
            report.best_epoch = Some(epoch);
            if let Some(p) = &outputs.checkpoint {
                checkpoint::save(p, store, &outputs.config_json)?;
            }
        }
        report.epochs.push(record);
    }
    Ok(report)
}
