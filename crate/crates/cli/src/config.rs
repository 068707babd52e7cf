//! Run configuration: one JSON document covering the field schema, model,
//! pruning schedule, synthetic teacher, and input/output paths. Any field can
//! be overridden from the command line with `--set dotted.path=value`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pairattn_core::{FieldDef, FieldSchema, ModelConfig, PruneConfig, TeacherPair, TeacherSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Where each command reads and writes by default; subcommand flags take
/// precedence over these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub metrics: PathBuf,
    /// Basename for the exported pair-strength matrix; `.csv` and `.json`
    /// are appended.
    pub weights: PathBuf,
}

impl Default for RunPaths {
    fn default() -> Self {
        RunPaths {
            train_data: "data/train.csv".into(),
            test_data: "data/test.csv".into(),
            checkpoint: "out/model.ckpt".into(),
            history: "out/history.json".into(),
            metrics: "out/metrics.json".into(),
            weights: "out/pair_weights".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed. Every random draw in a run derives from it; the model
    /// section's own `seed` field is overwritten with this value.
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub schema: FieldSchema,
    pub model: ModelConfig,
    pub prune: PruneConfig,
    pub teacher: TeacherSpec,
    pub paths: RunPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            n_train: 20_000,
            n_test: 5_000,
            schema: default_schema(),
            model: ModelConfig::default(),
            prune: PruneConfig::default(),
            teacher: default_teacher(),
            paths: RunPaths::default(),
        }
    }
}

/// 15 query fields and 2 behavior fields, vocabulary 1,000 each, histories
/// up to 50 items.
fn default_schema() -> FieldSchema {
    FieldSchema {
        query_fields: (0..15).map(|j| FieldDef { name: format!("q{j}"), vocab: 1000 }).collect(),
        behavior_fields: (0..2).map(|p| FieldDef { name: format!("b{p}"), vocab: 1000 }).collect(),
        max_behaviors: 50,
        correspondence_map: Vec::new(),
    }
}

/// Four planted field pairs of equal strength; the data generator's labels
/// depend on exactly these interactions.
fn default_teacher() -> TeacherSpec {
    TeacherSpec {
        pairs: vec![
            TeacherPair { behavior_field: 0, query_field: 2, weight: 5.0 },
            TeacherPair { behavior_field: 0, query_field: 7, weight: 5.0 },
            TeacherPair { behavior_field: 1, query_field: 4, weight: 5.0 },
            TeacherPair { behavior_field: 1, query_field: 11, weight: 5.0 },
        ],
        embed_seed: 424_242,
        logit_scale: 8.0,
        embed_dim: 64,
    }
}

impl RunConfig {
    /// The model config actually used for training: the run's master seed
    /// replaces whatever the `model.seed` field says.
    pub fn model_config(&self) -> ModelConfig {
        let mut m = self.model.clone();
        m.seed = self.seed;
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.model.validate()?;
        self.prune.validate()?;
        let (p, m) = (self.schema.n_behavior(), self.schema.n_query());
        for pair in &self.teacher.pairs {
            if pair.behavior_field >= p || pair.query_field >= m {
                bail!(
                    "teacher pair ({}, {}) is outside the {p} x {m} field grid",
                    pair.behavior_field,
                    pair.query_field
                );
            }
        }
        if self.teacher.embed_dim == 0 {
            bail!("teacher embed_dim must be >= 1");
        }
        if self.n_train == 0 || self.n_test == 0 {
            bail!("n_train and n_test must be >= 1");
        }
        Ok(())
    }
}

/// Loads the config file (or starts from defaults), applies `--set` overrides
/// in order, and validates the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("config {} is not valid JSON", p.display()))?
        }
        None => serde_json::to_value(RunConfig::default())?,
    };
    for entry in overrides {
        apply_override(&mut doc, entry)?;
    }
    let cfg: RunConfig =
        serde_json::from_value(doc).context("config does not match the expected shape")?;
    cfg.validate()?;
    Ok(cfg)
}

/// `--set model.learning_rate=0.05`: descends the dotted path, creating
/// intermediate objects, and replaces the leaf. The value is parsed as JSON
/// (numbers, booleans, arrays like `[200,80,1]`, quoted strings) and falls
/// back to a plain string, so `--set model.attention=din` works unquoted.
fn apply_override(doc: &mut Value, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .with_context(|| format!("override '{entry}' is not of the form key=value"))?;
    if path.is_empty() {
        bail!("override '{entry}' has an empty key");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let segments: Vec<&str> = path.split('.').collect();
    for seg in &segments[..segments.len() - 1] {
        if !node.is_object() {
            bail!("override '{entry}': '{seg}' is not an object");
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(map) => map.insert(segments.last().unwrap().to_string(), value),
        None => bail!("override '{entry}': parent of '{}' is not an object", segments.last().unwrap()),
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = load(
            None,
            &[
                "seed=7".into(),
                "model.learning_rate=0.5".into(),
                "model.mlp_dims=[64,32,1]".into(),
                "model.attention=din".into(),
                "prune.target_sparsity=0.6".into(),
                "paths.checkpoint=\"x/m.ckpt\"".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.learning_rate, 0.5);
        assert_eq!(cfg.model.mlp_dims, vec![64, 32, 1]);
        assert_eq!(cfg.model.attention, pairattn_core::AttentionKind::Din);
        assert_eq!(cfg.prune.target_sparsity, 0.6);
        assert_eq!(cfg.paths.checkpoint, PathBuf::from("x/m.ckpt"));
        // Unquoted strings work too.
        let cfg = load(None, &["paths.history=h.json".into()]).unwrap();
        assert_eq!(cfg.paths.history, PathBuf::from("h.json"));
    }

    #[test]
    fn master_seed_wins_over_model_seed() {
        let cfg = load(None, &["seed=9".into(), "model.seed=1".into()]).unwrap();
        assert_eq!(cfg.model_config().seed, 9);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        assert!(load(None, &["no_equals_sign".into()]).is_err());
        assert!(load(None, &["=5".into()]).is_err());
        assert!(load(None, &["seed.sub=1".into()]).is_err());
        assert!(load(None, &["model.learning_rate=-1".into()]).is_err());
        assert!(load(None, &["model.attention=nope".into()]).is_err());
    }

    #[test]
    fn partial_config_file_is_filled_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{ "seed": 3, "model": { "epochs": 2 } }"#).unwrap();
        let cfg = load(Some(&path), &[]).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model.epochs, 2);
        assert_eq!(cfg.model.embed_dim, 64);
        assert_eq!(cfg.n_train, 20_000);
    }
}
