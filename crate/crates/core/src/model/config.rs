//! Model architecture configuration and attention-scheme selection.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which attention variant a model trains and evaluates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionScheme {
    /// Plain softmax attention over all non-PAD positions.
    #[serde(rename = "standard")]
    Standard,
    /// Single query; cross-lingual attention scores randomly dropped during
    /// training, full attention at evaluation.
    #[serde(rename = "dropout-baseline")]
    DropoutBaseline,
    /// Dual query with one cross-lingual query matrix for all language pairs.
    #[serde(rename = "shared-qcross")]
    SharedQcross,
    /// Dual query with one cross-lingual query matrix per language pair,
    /// swappable at inference.
    #[serde(rename = "pair-qcross")]
    PairQcross,
}

impl AttentionScheme {
    /// Schemes that route cross-lingual attention through the second query.
    pub fn uses_qcross(self) -> bool {
        matches!(self, AttentionScheme::SharedQcross | AttentionScheme::PairQcross)
    }

    /// Stable identifier used in configs, reports, and CSV rows.
    pub fn name(self) -> &'static str {
        match self {
            AttentionScheme::Standard => "standard",
            AttentionScheme::DropoutBaseline => "dropout-baseline",
            AttentionScheme::SharedQcross => "shared-qcross",
            AttentionScheme::PairQcross => "pair-qcross",
        }
    }
}

/// Key into the cross-query registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QcrossKey {
    Shared,
    /// Unordered language pair, normalized to `(min, max)`.
    Pair(usize, usize),
}

impl QcrossKey {
    pub fn pair(a: usize, b: usize) -> Self {
        QcrossKey::Pair(a.min(b), a.max(b))
    }

    /// Tensor-name segment: `shared` or `pair-a-b`.
    pub fn name(&self) -> String {
        match self {
            QcrossKey::Shared => "shared".to_string(),
            QcrossKey::Pair(a, b) => format!("pair-{a}-{b}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "shared" {
            return Ok(QcrossKey::Shared);
        }
        if let Some(rest) = s.strip_prefix("pair-") {
            let mut it = rest.splitn(2, '-');
            let a = it.next().and_then(|v| v.parse::<usize>().ok());
            let b = it.next().and_then(|v| v.parse::<usize>().ok());
            if let (Some(a), Some(b)) = (a, b) {
                if a < b {
                    return Ok(QcrossKey::Pair(a, b));
                }
            }
        }
        Err(Error::config(format!(
            "invalid cross-query key {s:?}; expected \"shared\" or \"pair-a-b\" with a < b"
        )))
    }
}

impl std::fmt::Display for QcrossKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Encoder architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub n_classes: usize,
    pub scheme: AttentionScheme,
    pub p_mask: f64,
}

impl ModelConfig {
    /// Desk-scale default sized for the four-language synthetic vocabulary.
    pub fn default_for_vocab(vocab_size: usize, scheme: AttentionScheme) -> Self {
        ModelConfig {
            vocab_size,
            hidden_dim: 64,
            n_layers: 4,
            n_heads: 4,
            ffn_dim: 128,
            max_seq_len: 64,
            n_classes: 2,
            scheme,
            p_mask: match scheme {
                AttentionScheme::DropoutBaseline => 0.4,
                _ => 1.0,
            },
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.hidden_dim == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.ffn_dim == 0
            || self.max_seq_len == 0
        {
            return Err(Error::config("model: all dimensions must be positive"));
        }
        if self.hidden_dim % self.n_heads != 0 {
            return Err(Error::config(format!(
                "model: hidden dim {} not divisible by {} heads",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.n_classes != 2 {
            return Err(Error::config(format!(
                "model: binary classifier expected, got {} classes",
                self.n_classes
            )));
        }
        if !(0.0..=1.0).contains(&self.p_mask) {
            return Err(Error::config(format!(
                "model: p_mask {} outside [0,1]",
                self.p_mask
            )));
        }
        Ok(())
    }
}
