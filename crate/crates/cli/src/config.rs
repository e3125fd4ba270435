//! Flat run configuration: JSON file plus `--set key=value` overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use xattn_core::data::{LanguageRegistry, TheoryConfig};
use xattn_core::model::{AttentionScheme, ModelConfig};
use xattn_core::train::{Protocol, TrainConfig};
use xattn_core::{Error, Result};

/// Every knob a run can turn, with working defaults for a desk-scale model.
/// Unknown keys are rejected by name; missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // Model shape.
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub scheme: String,
    /// Mask keep/drop parameter; `null` picks the scheme default.
    pub p_mask: Option<f64>,

    // Language registry.
    pub n_languages: usize,
    pub reversed_languages: Vec<usize>,
    pub max_entities: usize,
    pub max_attributes: usize,

    // Theory sampling.
    pub n_facts: usize,
    pub n_rules: usize,
    pub target_depth: usize,
    pub n_statements: usize,

    // Dataset generation.
    pub data_kind: String,
    pub langs: Vec<usize>,
    pub pair: Vec<usize>,
    pub n_examples: usize,

    // Training.
    pub protocol: String,
    pub epochs: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub curriculum: bool,
    pub seed: u64,
    pub target_dev_accuracy: Option<f64>,

    // Paths and run wiring.
    pub train_data: String,
    pub dev_data: String,
    pub corpus: String,
    pub checkpoint: String,
    pub qcross_key: String,
    pub setting: String,
    pub eval_data: String,
    pub recipe: String,
    pub trained_pair: Vec<usize>,
    pub datasets_dir: String,
    pub n_attention_examples: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            hidden_dim: 64,
            n_layers: 4,
            n_heads: 4,
            ffn_dim: 128,
            max_seq_len: 64,
            scheme: "standard".to_string(),
            p_mask: None,
            n_languages: 4,
            reversed_languages: vec![2, 3],
            max_entities: 6,
            max_attributes: 6,
            n_facts: 4,
            n_rules: 3,
            target_depth: 0,
            n_statements: 4,
            data_kind: "mono".to_string(),
            langs: vec![0],
            pair: vec![0, 1],
            n_examples: 512,
            protocol: "full-ft".to_string(),
            epochs: 10,
            iterations: 0,
            batch_size: 16,
            peak_lr: 1e-3,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            curriculum: false,
            seed: 0,
            target_dev_accuracy: None,
            train_data: String::new(),
            dev_data: String::new(),
            corpus: String::new(),
            checkpoint: String::new(),
            qcross_key: String::new(),
            setting: String::new(),
            eval_data: String::new(),
            recipe: String::new(),
            trained_pair: vec![0, 1],
            datasets_dir: String::new(),
            n_attention_examples: 4,
        }
    }
}

/// Parse the config JSON (empty text means `{}`), apply `key=value`
/// overrides on top, and deserialize with full key/type diagnostics.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Config> {
    let body = if text.trim().is_empty() { "{}" } else { text };
    let mut value: Value = serde_json::from_str(body)
        .map_err(|e| Error::config(format!("config is not valid JSON: {e}")))?;
    let map = value
        .as_object_mut()
        .ok_or_else(|| Error::config("config must be a JSON object"))?;
    for pair in overrides {
        let (key, raw) = pair.split_once('=').ok_or_else(|| {
            Error::config(format!("override `{pair}` is not of the form key=value"))
        })?;
        // A value that parses as JSON is taken structurally (numbers, bools,
        // arrays, null); anything else is a bare string.
        let parsed = serde_json::from_str::<Value>(raw)
            .unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.to_string(), parsed);
    }
    let deserializer = value.clone();
    serde_path_to_error::deserialize(deserializer).map_err(|e| {
        Error::config(format!(
            "config key `{}`: {}",
            e.path(),
            e.inner()
        ))
    })
}

impl Config {
    pub fn registry(&self) -> Result<LanguageRegistry> {
        LanguageRegistry::new(
            self.n_languages,
            self.max_entities,
            self.max_attributes,
            &self.reversed_languages,
        )
    }

    pub fn theory_cfg(&self) -> TheoryConfig {
        TheoryConfig {
            n_entities: self.max_entities,
            n_attributes: self.max_attributes,
            n_facts: self.n_facts,
            n_rules: self.n_rules,
            target_depth: self.target_depth,
            n_statements: self.n_statements,
        }
    }

    pub fn attention_scheme(&self) -> Result<AttentionScheme> {
        serde_json::from_value(Value::String(self.scheme.clone()))
            .map_err(|_| Error::config(format!("unknown attention scheme `{}`", self.scheme)))
    }

    pub fn model_cfg(&self, vocab_size: usize) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::default_for_vocab(vocab_size, self.attention_scheme()?);
        cfg.hidden_dim = self.hidden_dim;
        cfg.n_layers = self.n_layers;
        cfg.n_heads = self.n_heads;
        cfg.ffn_dim = self.ffn_dim;
        cfg.max_seq_len = self.max_seq_len;
        if let Some(p) = self.p_mask {
            cfg.p_mask = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn protocol(&self) -> Result<Protocol> {
        serde_json::from_value(Value::String(self.protocol.clone()))
            .map_err(|_| Error::config(format!("unknown protocol `{}`", self.protocol)))
    }

    /// Trainer hyperparameters; `protocol` may be forced by the verb.
    pub fn train_cfg(&self, protocol: Protocol) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            protocol,
            epochs: self.epochs,
            iterations: self.iterations,
            batch_size: self.batch_size,
            peak_lr: self.peak_lr,
            warmup_ratio: self.warmup_ratio,
            weight_decay: self.weight_decay,
            curriculum: self.curriculum,
            seed: self.seed,
            target_dev_accuracy: self.target_dev_accuracy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The `(anchor, other)` ordered pair named by a two-element list field.
    pub fn pair_of(&self, field: &'static str, value: &[usize]) -> Result<(usize, usize)> {
        if value.len() != 2 || value[0] == value[1] {
            return Err(Error::config(format!(
                "{field} must list two distinct language ids, got {value:?}"
            )));
        }
        Ok((value[0], value[1]))
    }
}
