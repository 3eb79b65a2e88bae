//! Orchestration behind the CLI subcommands. Every file write happens on the
//! calling thread.

use std::path::{Path, PathBuf};

use crate::bench::init_rng;
use crate::checkpoint;
use crate::config::{Dtype, RunConfig, Split};
use crate::dataset::{load_dataset, Example};
use crate::dot::export_dot;
use crate::encoder::{EmbeddingInit, Hgn};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::features::{parse_embedding_file, GeneratedFeatureProvider, StatementProvider};
use crate::gradcheck::{self, GradCheckReport};
use crate::grounding::Grounder;
use crate::kg::{KgOptions, KnowledgeGraph};
use crate::metrics::{predict_all, summarize, Metrics};
use crate::params::ParameterStore;
use crate::pipeline::{Pipeline, PreparedExample};
use crate::synth::generate_synth;
use crate::tensor::Real;
use crate::trainer::{train, TrainOutputs, TrainReport};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.json";

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("{key} is required")))
}

pub fn load_kg(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load(
        required(&cfg.kg.facts, "kg.facts")?,
        required(&cfg.kg.entities, "kg.entities")?,
        required(&cfg.kg.relations, "kg.relations")?,
        KgOptions {
            add_inverse_relations: cfg.kg.add_inverse_relations,
        },
    )
}

pub fn build_pipeline(cfg: &RunConfig, kg: &KnowledgeGraph) -> Result<Pipeline> {
    let grounder = match &cfg.kg.stopwords {
        Some(p) => Grounder::with_stopword_file(kg, p)?,
        None => Grounder::new(kg),
    };
    let generated = match &cfg.features.generated_fixture {
        Some(p) => GeneratedFeatureProvider::load_fixture(p)?,
        None => GeneratedFeatureProvider::stub(cfg.features.stub_seed, cfg.model.d_gen),
    };
    if generated.dim() != cfg.model.d_gen {
        return Err(Error::Config(format!(
            "generated features are {}-d, model.d_gen is {}",
            generated.dim(),
            cfg.model.d_gen
        )));
    }
    let statements = if cfg.model.use_statement_vector {
        let p = match &cfg.features.statement_fixture {
            Some(p) => StatementProvider::load_fixture(p)?,
            None => StatementProvider::HashedBag {
                buckets: cfg.features.statement_buckets,
                dim: cfg.model.d_s,
            },
        };
        if p.dim() != cfg.model.d_s {
            return Err(Error::Config(format!(
                "statement vectors are {}-d, model.d_s is {}",
                p.dim(),
                cfg.model.d_s
            )));
        }
        Some(p)
    } else {
        None
    };
    Ok(Pipeline {
        kg: kg.clone(),
        grounder,
        policy: cfg.kg.policy,
        mode: cfg.model.edge_features,
        generated,
        statements,
    })
}

/// Registers a freshly initialized model in `store`.
pub fn build_model<T: Real>(
    cfg: &RunConfig,
    kg: &KnowledgeGraph,
    store: &mut ParameterStore<T>,
) -> Result<Hgn> {
    let load = |p: &Option<PathBuf>| -> Result<_> {
        p.as_deref()
            .map(|p| parse_embedding_file(&read_to_string(p)?, &p.display().to_string()))
            .transpose()
    };
    let init = EmbeddingInit {
        entities: load(&cfg.features.entity_init)?,
        relations: load(&cfg.features.relation_init)?,
    };
    let buckets = cfg
        .features
        .statement_fixture
        .is_none()
        .then_some(cfg.features.statement_buckets);
    let mut rng = init_rng(cfg.train.seed);
    Hgn::new(
        store,
        &cfg.model,
        kg.num_entities(),
        kg.num_relations(),
        buckets,
        &init,
        &mut rng,
    )
}

pub fn load_split(cfg: &RunConfig, split: Split) -> Result<Option<Vec<Example>>> {
    let path = match split {
        Split::Train => &cfg.data.train,
        Split::Dev => &cfg.data.dev,
        Split::Test => &cfg.data.test,
    };
    path.as_deref().map(load_dataset).transpose()
}

fn prepare(
    pipeline: &Pipeline,
    cfg: &RunConfig,
    split: Split,
) -> Result<Option<Vec<PreparedExample>>> {
    load_split(cfg, split)?
        .map(|ex| pipeline.prepare_all(&ex))
        .transpose()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub report: TrainReport,
    /// Test metrics of the checkpointed parameters, when a test split is configured.
    pub test: Option<Metrics>,
}

/// Trains, writes the log and checkpoint under `output`, then scores the test
/// split with the checkpointed parameters.
pub fn run_train<T: Real>(cfg: &RunConfig) -> Result<TrainSummary> {
    let kg = load_kg(cfg)?;
    let pipeline = build_pipeline(cfg, &kg)?;
    let train_set = prepare(&pipeline, cfg, Split::Train)?
        .ok_or_else(|| Error::Config("data.train is required".into()))?;
    let dev_set = prepare(&pipeline, cfg, Split::Dev)?;
    let mut store = ParameterStore::<T>::new();
    let model = build_model(cfg, &kg, &mut store)?;
    let ckpt = cfg.output.join(CHECKPOINT_FILE);
    let outputs = TrainOutputs {
        log: Some(cfg.output.join(LOG_FILE)),
        checkpoint: Some(ckpt.clone()),
        config_json: serde_json::to_string(cfg)?,
    };
    let report = train(
        &model,
        &mut store,
        &train_set,
        dev_set.as_deref(),
        &cfg.train,
        &outputs,
    )?;
    let test = match prepare(&pipeline, cfg, Split::Test)? {
        Some(test_set) => {
            checkpoint::load(&ckpt)?.restore(&mut store)?;
            let m = summarize(&test_set, &predict_all(&model, &store, &test_set)?);
            write_json(&cfg.output.join(METRICS_FILE), &m)?;
            Some(m)
        }
        None => None,
    };
    Ok(TrainSummary { report, test })
}

fn restored_model<T: Real>(
    cfg: &RunConfig,
    kg: &KnowledgeGraph,
) -> Result<(Hgn, ParameterStore<T>)> {
    let mut store = ParameterStore::<T>::new();
    let model = build_model(cfg, kg, &mut store)?;
    checkpoint::load(&cfg.checkpoint_path())?.restore(&mut store)?;
    Ok((model, store))
}

/// Scores the test split with the configured checkpoint.
pub fn run_eval<T: Real>(cfg: &RunConfig) -> Result<Metrics> {
    let kg = load_kg(cfg)?;
    let pipeline = build_pipeline(cfg, &kg)?;
    let test_set = prepare(&pipeline, cfg, Split::Test)?
        .ok_or_else(|| Error::Config("data.test is required".into()))?;
    let (model, store) = restored_model::<T>(cfg, &kg)?;
    let m = summarize(&test_set, &predict_all(&model, &store, &test_set)?);
    write_json(&cfg.output.join(METRICS_FILE), &m)?;
    Ok(m)
}

/// Writes `<id>.<k>.dot` and `<id>.<k>.json` for every candidate of the
/// selected examples under `<output>/graphs`; returns the DOT paths.
pub fn run_export<T: Real>(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let kg = load_kg(cfg)?;
    let pipeline = build_pipeline(cfg, &kg)?;
    let mut examples = load_split(cfg, cfg.export.split)?
        .ok_or_else(|| Error::Config(format!("no {:?} split configured", cfg.export.split)))?;
    if let Some(id) = &cfg.export.example {
        examples.retain(|e| &e.id == id);
        if examples.is_empty() {
            return Err(Error::Argument(format!("no example with id {id:?}")));
        }
    }
    let prepared = pipeline.prepare_all(&examples)?;
    let (model, store) = restored_model::<T>(cfg, &kg)?;
    let preds = predict_all(&model, &store, &prepared)?;
    let dir = cfg.output.join("graphs");
    let mut written = Vec::new();
    for (ex, pred) in prepared.iter().zip(&preds) {
        for (k, (cand, weights)) in ex.candidates.iter().zip(&pred.weights).enumerate() {
            let (graph, _) = model.restrict_input(cand)?;
            let stem = format!("{}.{k}", sanitize(&ex.id));
            let dot = dir.join(format!("{stem}.dot"));
            export_dot(&graph, &kg, weights, cfg.export.threshold, &dot)?;
            let w = (!weights.is_empty()).then_some(weights.as_slice());
            write_json(&dir.join(format!("{stem}.json")), &graph.to_json(&kg, w))?;
            written.push(dot);
        }
    }
    Ok(written)
}

/// File-name-safe form of an example id.
fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Finite-difference check at 64-bit on the first `grad_check.examples`
/// training examples, or on the built-in fixture when no data is configured.
pub fn run_grad_check(cfg: &RunConfig) -> Result<Vec<(String, GradCheckReport)>> {
    let (kg, examples) = match &cfg.data.train {
        Some(_) => {
            let kg = load_kg(cfg)?;
            let mut ex = load_split(cfg, Split::Train)?.unwrap_or_default();
            ex.truncate(cfg.grad_check.examples.max(1));
            (kg, ex)
        }
        None => (gradcheck::fixture_kg(), vec![gradcheck::fixture_example()]),
    };
    let pipeline = build_pipeline(cfg, &kg)?;
    let mut store = ParameterStore::<f64>::new();
    let model = build_model(cfg, &kg, &mut store)?;
    let mut out = Vec::new();
    for ex in &examples {
        let prepared = pipeline.prepare(ex)?;
        let report = gradcheck::check(
            &model,
            &mut store,
            &prepared,
            cfg.train.beta,
            cfg.grad_check.step,
        )?;
        out.push((ex.id.clone(), report));
    }
    Ok(out)
}

/// Generates the synthetic benchmark from `synth` into `output`.
pub fn run_synth_gen(cfg: &RunConfig) -> Result<()> {
    generate_synth(&cfg.synth)?.write(&cfg.output)
}

pub fn dispatch_train(cfg: &RunConfig) -> Result<TrainSummary> {
    match cfg.dtype {
        Dtype::F64 => run_train::<f64>(cfg),
        Dtype::F32 => run_train::<f32>(cfg),
    }
}

pub fn dispatch_eval(cfg: &RunConfig) -> Result<Metrics> {
    match cfg.dtype {
        Dtype::F64 => run_eval::<f64>(cfg),
        Dtype::F32 => run_eval::<f32>(cfg),
    }
}

pub fn dispatch_export(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match cfg.dtype {
        Dtype::F64 => run_export::<f64>(cfg),
        Dtype::F32 => run_export::<f32>(cfg),
    }
}
