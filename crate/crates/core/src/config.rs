//! Run configuration: one JSON file plus `--dotted.key value` overrides.
//!
//! Relative paths inside the file resolve against the file's directory;
//! relative paths given as overrides resolve against the working directory.
//! The default `output` directory also sits next to the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::encoder::HgnConfig;
use crate::error::{read_to_string, Error, Result};
use crate::graph::MultiRelationPolicy;
use crate::metrics::PRUNE_THRESHOLD;
use crate::synth::SynthSpec;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgConfig {
    pub entities: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub facts: Option<PathBuf>,
    pub add_inverse_relations: bool,
    pub policy: MultiRelationPolicy,
    /// One stopword per line; the built-in list is used when absent.
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Generated-feature fixture; the hash stub is used when absent.
    pub generated_fixture: Option<PathBuf>,
    pub stub_seed: u64,
    /// Statement fixture; the hashed bag-of-words encoder is used when absent.
    pub statement_fixture: Option<PathBuf>,
    pub statement_buckets: usize,
    pub entity_init: Option<PathBuf>,
    pub relation_init: Option<PathBuf>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            generated_fixture: None,
            stub_seed: 0,
            statement_fixture: None,
            statement_buckets: 4096,
            entity_init: None,
            relation_init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub split: Split,
    /// Example id to export; every example of the split when absent.
    pub example: Option<String>,
    pub threshold: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            split: Split::Test,
            example: None,
            threshold: PRUNE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Examples taken from the front of the training split; the built-in
    /// fixture is used when no training split is configured.
    pub examples: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            examples: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kg: KgConfig,
    pub features: FeatureConfig,
    pub data: DataConfig,
    pub model: HgnConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub export: ExportConfig,
    pub grad_check: GradCheckConfig,
    pub dtype: Dtype,
    /// Directory for logs, checkpoints, metrics, and exports.
    pub output: PathBuf,
    /// Checkpoint to load for `eval` and `export-graph`; defaults to
    /// `<output>/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kg: KgConfig::default(),
            features: FeatureConfig::default(),
            data: DataConfig::default(),
            model: HgnConfig::default(),
            train: TrainConfig::default(),
            synth: SynthSpec::default(),
            export: ExportConfig::default(),
            grad_check: GradCheckConfig::default(),
            dtype: Dtype::F64,
            output: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

/// Dotted keys whose values are filesystem paths.
pub const PATH_KEYS: &[&str] = &[
    "kg.entities",
    "kg.relations",
    "kg.facts",
    "kg.stopwords",
    "features.generated_fixture",
    "features.statement_fixture",
    "features.entity_init",
    "features.relation_init",
    "data.train",
    "data.dev",
    "data.test",
    "output",
    "checkpoint",
];

fn slot<'a>(root: &'a mut Value, key: &str) -> Result<&'a mut Value> {
    let mut cur = root;
    for part in key.split('.') {
        if part.is_empty() {
            return Err(Error::Config(format!("bad key {key:?}")));
        }
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        cur = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is inside a non-object value")))?
            .entry(part)
            .or_insert(Value::Null);
    }
    Ok(cur)
}

fn resolve_paths(root: &mut Value, base: &Path) -> Result<()> {
    for key in PATH_KEYS {
        let v = slot(root, key)?;
        if let Value::String(s) = v {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *v = Value::String(base.join(p).to_string_lossy().into_owned());
            }
        }
    }
    Ok(())
}

/// Override values parse as JSON when possible, otherwise as a bare string.
pub fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Splits `["--a.b", "1", "--c", "x"]` into key/value pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Argument(format!("expected --key, got {flag:?}")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Argument(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key, value));
    }
    Ok(out)
}

impl RunConfig {
    /// Merges overrides into the file's JSON and deserializes the result.
    pub fn from_json(text: &str, base: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut root: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !root.is_object() {
            return Err(Error::Config("top level must be a JSON object".into()));
        }
        let default_output = RunConfig::default().output.to_string_lossy().into_owned();
        root.as_object_mut()
            .expect("checked above")
            .entry("output")
            .or_insert(Value::String(default_output));
        resolve_paths(&mut root, base)?;
        for (key, raw) in overrides {
            *slot(&mut root, key)? = parse_override_value(raw);
        }
        strip_nulls(&mut root);
        let cfg: RunConfig =
            serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        RunConfig::from_json(&read_to_string(path)?, base, overrides)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output.join("model.ckpt"))
    }
}

/// Removes object members that are `null` so that field defaults apply.
fn strip_nulls(v: &mut Value) {
    if let Value::Object(map) = v {
        map.retain(|_, x| !x.is_null());
        map.values_mut().for_each(strip_nulls);
    }
}
