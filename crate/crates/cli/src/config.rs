//! Flat `key=value` run configuration checked against a fixed schema.
//!
//! Sources are applied in order: schema defaults (per command), the
//! `--config` file, then command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PrepCorpus,
    BuildVocab,
    Pretrain,
    Finetune,
    Evaluate,
    Predict,
    Stats,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::PrepCorpus => "prep-corpus",
            Command::BuildVocab => "build-vocab",
            Command::Pretrain => "pretrain",
            Command::Finetune => "finetune",
            Command::Evaluate => "evaluate",
            Command::Predict => "predict",
            Command::Stats => "stats",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Text,
    Path,
    /// Comma-separated paths.
    PathList,
    Choice(&'static [&'static str]),
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Int => "a non-negative integer".into(),
            Kind::Float => "a number".into(),
            Kind::Bool => "true or false".into(),
            Kind::Text => "text".into(),
            Kind::Path => "a path".into(),
            Kind::PathList => "comma-separated paths".into(),
            Kind::Choice(c) => format!("one of {}", c.join("|")),
        }
    }

    fn accepts(self, v: &str) -> bool {
        match self {
            Kind::Int => v.parse::<u64>().is_ok(),
            Kind::Float => v.parse::<f64>().is_ok_and(f64::is_finite),
            Kind::Bool => matches!(v, "true" | "false"),
            Kind::Text | Kind::Path | Kind::PathList => true,
            Kind::Choice(c) => c.contains(&v),
        }
    }
}

pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    /// Replaces `default` for the fine-tuning command.
    pub finetune_default: Option<&'static str>,
}

const fn key(name: &'static str, kind: Kind, default: &'static str) -> KeySpec {
    KeySpec {
        name,
        kind,
        default,
        finetune_default: None,
    }
}

const fn key2(name: &'static str, kind: Kind, default: &'static str, finetune: &'static str) -> KeySpec {
    KeySpec {
        name,
        kind,
        default,
        finetune_default: Some(finetune),
    }
}

/// Defaults follow the base pretraining column and the fine-tuning table.
pub const SCHEMA: &[KeySpec] = &[
    // architecture
    key("vocab_size", Kind::Int, "30000"),
    key("embedding_size", Kind::Int, "128"),
    key("hidden_size", Kind::Int, "768"),
    key("num_hidden_layers", Kind::Int, "12"),
    key("num_attention_heads", Kind::Int, "12"),
    key("intermediate_size", Kind::Int, "3072"),
    key("max_position_embeddings", Kind::Int, "512"),
    key("type_vocab_size", Kind::Int, "2"),
    key("share_parameters", Kind::Bool, "true"),
    key("dropout_rate", Kind::Float, "0"),
    // optimization
    key2("optimizer", Kind::Choice(&["lamb", "adamw"]), "lamb", "adamw"),
    key2("learning_rate", Kind::Float, "0.00176", "0.00001"),
    key2("warmup_steps", Kind::Int, "3125", "320"),
    key2("train_steps", Kind::Int, "200000", "5336"),
    key2("train_batch_size", Kind::Int, "1024", "32"),
    key("eval_batch_size", Kind::Int, "16"),
    key("weight_decay", Kind::Float, "0.01"),
    key("adam_beta1", Kind::Float, "0.9"),
    key("adam_beta2", Kind::Float, "0.999"),
    key("adam_epsilon", Kind::Float, "0.000001"),
    key2("save_checkpoint_steps", Kind::Int, "10000", "200"),
    key2("log_every", Kind::Int, "100", "10"),
    key("resume", Kind::Bool, "false"),
    // pretraining stops here (0 = train_steps); resume=true continues later
    key("stop_at_step", Kind::Int, "0"),
    // data
    key("max_seq_length", Kind::Int, "512"),
    key("max_predictions_per_seq", Kind::Int, "20"),
    key("masked_lm_prob", Kind::Float, "0.15"),
    key("dup_factor", Kind::Int, "5"),
    key("lower_case", Kind::Bool, "true"),
    // run
    key("seed", Kind::Int, "12345"),
    key("threads", Kind::Int, "0"),
    // files
    key("raw_files", Kind::PathList, ""),
    key("corpus_file", Kind::Path, ""),
    key("vocab_file", Kind::Path, ""),
    key("merges_file", Kind::Path, ""),
    key("checkpoint", Kind::Path, ""),
    key("train_file", Kind::Path, ""),
    key("dev_file", Kind::Path, ""),
    key("test_file", Kind::Path, ""),
    key("input_file", Kind::Path, ""),
    key("gold_file", Kind::Path, ""),
    key("pred_file", Kind::Path, ""),
    key("conll_file", Kind::Path, ""),
];

fn spec(name: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.name == name)
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key {key:?}")]
    UnknownKey { key: String, origin: String },
    #[error("{origin}: {key}={value:?} is not {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: String,
        origin: String,
    },
    #[error("{origin}: expected key=value, found {text:?}")]
    Syntax { text: String, origin: String },
    #[error("missing required setting {0}")]
    Missing(String),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let values = SCHEMA
            .iter()
            .map(|s| {
                let v = match (command, s.finetune_default) {
                    (Command::Finetune, Some(f)) => f,
                    _ => s.default,
                };
                (s.name.to_string(), v.to_string())
            })
            .collect();
        Self { values }
    }

    /// Applies one `key=value` assignment; `origin` names where it came from.
    pub fn set(&mut self, assignment: &str, origin: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            text: assignment.to_string(),
            origin: origin.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        let s = spec(k).ok_or_else(|| ConfigError::UnknownKey {
            key: k.to_string(),
            origin: origin.to_string(),
        })?;
        if !s.kind.accepts(v) {
            return Err(ConfigError::BadValue {
                key: k.to_string(),
                value: v.to_string(),
                expected: s.kind.describe(),
                origin: origin.to_string(),
            });
        }
        self.values.insert(k.to_string(), v.to_string());
        Ok(())
    }

    /// Applies a config file: `key=value` lines, `#` comments, blank lines.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                self.set(line, &format!("{source}:{}", i + 1))?;
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("{key} is not a schema key"))
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).parse().expect("validated integer")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).parse().expect("validated integer")
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated number")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.path(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn paths(&self, key: &str) -> Vec<PathBuf> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect()
    }

    /// Every key in name order, one `key=value` per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

/// Defaults for `command`, then the file, then `overrides`.
pub fn parse_config(command: Command, file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for o in overrides {
        cfg.set(o, "command line")?;
    }
    Ok(cfg)
}
