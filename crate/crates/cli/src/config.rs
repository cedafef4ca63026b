//! Run configuration: one JSON file, with flag overrides applied as
//! `dotted.key=value` edits on the JSON tree before deserializing.

use std::path::{Path, PathBuf};

use rxpredict_core::analysis::TsneConfig;
use rxpredict_core::model::CovSource;
use rxpredict_core::{BaselineConfig, CorpusConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Cnn,
    Lr,
    Mlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cnn => "cnn",
            Self::Lr => "lr",
            Self::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn" => Ok(Self::Cnn),
            "lr" => Ok(Self::Lr),
            "mlp" => Ok(Self::Mlp),
            _ => Err(format!("unknown model `{s}` (cnn, lr, mlp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Query words for nearest neighbors; empty means the medication names
    /// present in the vocabulary.
    pub neighbor_queries: Vec<String>,
    pub top_ngrams: usize,
    /// Notes scanned for filter n-grams (sampled from the training split).
    pub ngram_max_notes: usize,
    /// Test notes projected with t-SNE.
    pub tsne_max_points: usize,
    pub tsne: TsneConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            neighbor_queries: Vec::new(),
            top_ngrams: 5,
            ngram_max_notes: 2000,
            tsne_max_points: 2000,
            tsne: TsneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Parsed notes (JSON lines), as written by `parse` or `synth`.
    pub notes: PathBuf,
    pub output_dir: PathBuf,
    pub model: ModelKind,
    pub corpus: CorpusConfig,
    /// CNN settings. Its `seed` is replaced by each run seed.
    pub train: TrainConfig,
    /// Logistic-regression settings. Its `seed` is replaced by each run seed.
    pub lr: BaselineConfig,
    /// Perceptron settings. Its `seed` is replaced by each run seed.
    pub mlp: BaselineConfig,
    pub covariance: CovSource,
    pub analysis: AnalysisConfig,
    /// One run per seed; each seed re-splits the data and seeds training.
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            notes: PathBuf::from("notes.jsonl"),
            output_dir: PathBuf::from("runs"),
            model: ModelKind::Cnn,
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            lr: BaselineConfig::default(),
            mlp: BaselineConfig::mlp(),
            covariance: CovSource::Empirical,
            analysis: AnalysisConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Self::default()).expect("config serializes"),
        };
        for (key, value) in overrides {
            set_key(&mut tree, key, value)?;
        }
        let config: Self = serde_json::from_value(tree).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seed list has duplicates".into()));
        }
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.lr.validate().map_err(|e| CliError::Config(format!("lr: {e}")))?;
        self.mlp.validate().map_err(|e| CliError::Config(format!("mlp: {e}")))?;
        if self.corpus.seq_len == 0 || self.corpus.tfidf_dim == 0 {
            return Err(CliError::Config("seq_len and tfidf_dim must be positive".into()));
        }
        Ok(())
    }

    /// Checks that the notes file exists (separate from [`Self::validate`] so
    /// configs can be inspected without data).
    pub fn require_notes(&self) -> Result<(), CliError> {
        if self.notes.is_file() {
            Ok(())
        } else {
            Err(CliError::Data(format!("notes file {} not found", self.notes.display())))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form without `notes` and `output_dir`:
    /// paths say where a run lives, not what it computes (the notes are
    /// hashed by content separately).
    pub fn hash(&self) -> String {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = tree.as_object_mut() {
            obj.remove("notes");
            obj.remove("output_dir");
        }
        sha256_hex(tree.to_string().as_bytes())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{seed}"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Sets `a.b.c` in a JSON object tree. The value is parsed as JSON when it
/// parses, otherwise taken as a string.
pub fn set_key(tree: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(CliError::Config("empty key".into()))
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    if k.is_empty() {
        return Err("empty key".into());
    }
    Ok((k.to_string(), v.to_string()))
}
