//! Parameter store: named tensors, initialization, grouping, and checkpoints.
//!
//! Names form a stable hierarchy (`embed/…`, `layer{i}/…`, `pooler/…`,
//! `cls/…`, `mlm/…`, `qcross/<key>/layer{i}`) so training protocols can
//! select groups by prefix and freeze contracts can hash groups byte-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::tensor::{read_checkpoint, write_checkpoint, Tensor};
use crate::{Error, Result};

use super::config::{ModelConfig, QcrossKey};

/// Standard deviation of weight initialization.
const INIT_STD: f64 = 0.02;

/// All learnable tensors of one model, keyed by hierarchical name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

/// Draw one N(0, std²) sample (Box–Muller over two uniform draws; written out
/// here because the pinned RNG stack ships no Gaussian sampler).
fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn init_weight(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| normal(rng, INIT_STD)).collect();
    Tensor::from_vec(shape, data).expect("init shape consistent")
}

/// Expected (name, shape, gaussian?) triples for the fixed part of the model;
/// qcross entries are added separately.
fn schema(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, bool)> {
    let d = cfg.hidden_dim;
    let mut s: Vec<(String, Vec<usize>, bool)> = vec![
        ("embed/tok".into(), vec![cfg.vocab_size, d], true),
        ("embed/pos".into(), vec![cfg.max_seq_len, d], true),
        ("embed/seg".into(), vec![2, d], true),
        ("embed/ln/gamma".into(), vec![d], false),
        ("embed/ln/beta".into(), vec![d], false),
        ("pooler/W".into(), vec![d, d], true),
        ("pooler/b".into(), vec![d], false),
        ("cls/W".into(), vec![d, cfg.n_classes], true),
        ("cls/b".into(), vec![cfg.n_classes], false),
        ("mlm/W1".into(), vec![d, d], true),
        ("mlm/b1".into(), vec![d], false),
        ("mlm/ln/gamma".into(), vec![d], false),
        ("mlm/ln/beta".into(), vec![d], false),
        ("mlm/W2".into(), vec![d, cfg.vocab_size], true),
        ("mlm/b2".into(), vec![cfg.vocab_size], false),
    ];
    for i in 0..cfg.n_layers {
        for w in ["Wq", "Wk", "Wv", "Wo"] {
            s.push((format!("layer{i}/attn/{w}"), vec![d, d], true));
        }
        for b in ["bq", "bk", "bv", "bo"] {
            s.push((format!("layer{i}/attn/{b}"), vec![d], false));
        }
        s.push((format!("layer{i}/attn/ln/gamma"), vec![d], false));
        s.push((format!("layer{i}/attn/ln/beta"), vec![d], false));
        s.push((format!("layer{i}/ffn/W1"), vec![d, cfg.ffn_dim], true));
        s.push((format!("layer{i}/ffn/b1"), vec![cfg.ffn_dim], false));
        s.push((format!("layer{i}/ffn/W2"), vec![cfg.ffn_dim, d], true));
        s.push((format!("layer{i}/ffn/b2"), vec![d], false));
        s.push((format!("layer{i}/ffn/ln/gamma"), vec![d], false));
        s.push((format!("layer{i}/ffn/ln/beta"), vec![d], false));
    }
    s
}

fn qcross_tensor_name(key: QcrossKey, layer: usize) -> String {
    format!("qcross/{}/layer{layer}", key.name())
}

impl ModelParams {
    /// Fresh model: Gaussian weights, zero biases, unit layer-norm scales.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, shape, gaussian) in schema(cfg) {
            let t = if gaussian {
                init_weight(&shape, rng)
            } else if name.ends_with("gamma") {
                Tensor::full(&shape, 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            tensors.insert(name, t);
        }
        Ok(ModelParams { tensors })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::MissingKey {
            key: name.to_string(),
            available: self.tensors.keys().cloned().collect(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        if !self.tensors.contains_key(name) {
            return Err(Error::MissingKey {
                key: name.to_string(),
                available: self.tensors.keys().cloned().collect(),
            });
        }
        Ok(self.tensors.get_mut(name).expect("checked above"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    // ── cross-query registry ────────────────────────────────────────────

    /// Registry entries present in this model.
    pub fn qcross_keys(&self) -> Vec<QcrossKey> {
        let mut keys: Vec<QcrossKey> = self
            .tensors
            .keys()
            .filter_map(|n| n.strip_prefix("qcross/"))
            .filter_map(|rest| rest.split('/').next())
            .filter_map(|k| QcrossKey::parse(k).ok())
            .collect();
        keys.dedup();
        keys
    }

    pub fn has_qcross(&self, key: QcrossKey) -> bool {
        self.tensors.contains_key(&qcross_tensor_name(key, 0))
    }

    /// Tensor names of one registry entry, layer order.
    pub fn qcross_names(key: QcrossKey, n_layers: usize) -> Vec<String> {
        (0..n_layers).map(|i| qcross_tensor_name(key, i)).collect()
    }

    /// Install a registry entry as a copy of each layer's trained query
    /// weights, preserving initial behavior. No-op when already present.
    pub fn add_qcross(&mut self, cfg: &ModelConfig, key: QcrossKey) -> Result<()> {
        if self.has_qcross(key) {
            return Ok(());
        }
        for i in 0..cfg.n_layers {
            let wq = self.get(&format!("layer{i}/attn/Wq"))?.clone();
            self.tensors.insert(qcross_tensor_name(key, i), wq);
        }
        Ok(())
    }

    /// Resolve the registry entry for an evaluation pair: the pair's own
    /// entry when present, otherwise the shared entry.
    pub fn resolve_qcross(&self, a: usize, b: usize) -> Result<QcrossKey> {
        let pair = QcrossKey::pair(a, b);
        if self.has_qcross(pair) {
            return Ok(pair);
        }
        if self.has_qcross(QcrossKey::Shared) {
            return Ok(QcrossKey::Shared);
        }
        Err(Error::MissingKey {
            key: pair.name(),
            available: self.qcross_keys().iter().map(|k| k.name()).collect(),
        })
    }

    // ── persistence ─────────────────────────────────────────────────────

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.tensors)
    }

    /// Load and validate against an architecture: every schema tensor must be
    /// present with its exact shape; extra tensors are only allowed under
    /// `qcross/` and must shape-match the per-layer query weights.
    pub fn load(path: &Path, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let tensors = read_checkpoint(path)?;
        let mut expected: BTreeMap<String, Vec<usize>> = schema(cfg)
            .into_iter()
            .map(|(name, shape, _)| (name, shape))
            .collect();
        for (name, tensor) in &tensors {
            if let Some(rest) = name.strip_prefix("qcross/") {
                let mut parts = rest.split('/');
                let key = parts.next().unwrap_or("");
                let layer = parts.next().and_then(|l| {
                    l.strip_prefix("layer").and_then(|i| i.parse::<usize>().ok())
                });
                QcrossKey::parse(key)?;
                match layer {
                    Some(i) if i < cfg.n_layers && parts.next().is_none() => {}
                    _ => {
                        return Err(Error::data(format!(
                            "checkpoint: cross-query tensor {name} does not address a layer"
                        )))
                    }
                }
                let want = vec![cfg.hidden_dim, cfg.hidden_dim];
                if tensor.shape() != want.as_slice() {
                    return Err(Error::ShapeMismatch {
                        op: "load",
                        lhs: want,
                        rhs: tensor.shape().to_vec(),
                    });
                }
                continue;
            }
            match expected.remove(name) {
                Some(shape) if shape.as_slice() == tensor.shape() => {}
                Some(shape) => {
                    return Err(Error::ShapeMismatch {
                        op: "load",
                        lhs: shape,
                        rhs: tensor.shape().to_vec(),
                    })
                }
                None => {
                    return Err(Error::data(format!(
                        "checkpoint: unexpected tensor {name}"
                    )))
                }
            }
        }
        // Per-key completeness: an entry must cover every layer.
        let loaded = ModelParams { tensors };
        for key in loaded.qcross_keys() {
            for name in Self::qcross_names(key, cfg.n_layers) {
                if !loaded.tensors.contains_key(&name) {
                    return Err(Error::data(format!(
                        "checkpoint: cross-query entry {key} missing tensor {name}"
                    )));
                }
            }
        }
        if let Some(missing) = expected.keys().next() {
            return Err(Error::data(format!("checkpoint: missing tensor {missing}")));
        }
        Ok(loaded)
    }

    // ── parameter classification & group hashing ────────────────────────

    /// Bias-like parameters: additive vectors (attention/FFN biases,
    /// layer-norm shifts, head biases).
    pub fn is_bias_name(name: &str) -> bool {
        let last = name.rsplit('/').next().unwrap_or(name);
        matches!(last, "b" | "bq" | "bk" | "bv" | "bo" | "b1" | "b2" | "beta")
    }

    /// Encoder biases: bias-like parameters inside the embedding or a layer.
    pub fn is_encoder_bias(name: &str) -> bool {
        (name.starts_with("embed/") || name.starts_with("layer")) && Self::is_bias_name(name)
    }

    /// SHA-256 over every tensor whose name satisfies `select`, in name
    /// order, hashing name, shape, and little-endian payload bytes.
    pub fn group_hash(&self, mut select: impl FnMut(&str) -> bool) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (name, t) in &self.tensors {
            if !select(name) {
                continue;
            }
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update((t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                hasher.update((d as u32).to_le_bytes());
            }
            hasher.update(t.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::AttentionScheme;
    use rand::SeedableRng;

    fn cfg() -> ModelConfig {
        let mut c = ModelConfig::default_for_vocab(40, AttentionScheme::SharedQcross);
        c.hidden_dim = 16;
        c.n_layers = 2;
        c.n_heads = 2;
        c.ffn_dim = 24;
        c.max_seq_len = 20;
        c
    }

    #[test]
    fn init_is_seeded_and_complete() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p1 = ModelParams::init(&c, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p2 = ModelParams::init(&c, &mut rng).unwrap();
        assert_eq!(p1, p2);
        for (name, shape, _) in schema(&c) {
            assert_eq!(p1.get(&name).unwrap().shape(), shape.as_slice());
        }
        // Weights have the configured spread; biases zero; ln scales one.
        let w = p1.get("layer0/attn/Wq").unwrap();
        let std = {
            let n = w.numel() as f64;
            let mean = w.data().iter().sum::<f64>() / n;
            (w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
        };
        assert!((std - INIT_STD).abs() < 0.005, "std {std}");
        assert!(p1.get("layer0/attn/bq").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(p1.get("embed/ln/gamma").unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gaussian_sampler_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| normal(&mut rng, 1.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn qcross_entries_copy_wq_and_resolve_with_fallback() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ModelParams::init(&c, &mut rng).unwrap();
        assert!(p.qcross_keys().is_empty());
        p.add_qcross(&c, QcrossKey::Shared).unwrap();
        p.add_qcross(&c, QcrossKey::pair(0, 1)).unwrap();
        for i in 0..c.n_layers {
            let wq = p.get(&format!("layer{i}/attn/Wq")).unwrap();
            let qc = p.get(&format!("qcross/shared/layer{i}")).unwrap();
            assert_eq!(wq, qc);
        }
        assert_eq!(p.resolve_qcross(1, 0).unwrap(), QcrossKey::Pair(0, 1));
        assert_eq!(p.resolve_qcross(0, 2).unwrap(), QcrossKey::Shared);
        // No shared entry and no pair entry → error listing what exists.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut bare = ModelParams::init(&c, &mut rng).unwrap();
        bare.add_qcross(&c, QcrossKey::pair(0, 1)).unwrap();
        let err = bare.resolve_qcross(0, 3).unwrap_err();
        match err {
            Error::MissingKey { key, available } => {
                assert_eq!(key, "pair-0-3");
                assert_eq!(available, vec!["pair-0-1".to_string()]);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ModelParams::init(&c, &mut rng).unwrap();
        p.add_qcross(&c, QcrossKey::pair(0, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        p.save(&path).unwrap();
        let q = ModelParams::load(&path, &c).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.group_hash(|_| true), q.group_hash(|_| true));
    }

    #[test]
    fn load_rejects_wrong_architecture_and_stray_tensors() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::init(&c, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        p.save(&path).unwrap();
        let mut wrong = c.clone();
        wrong.ffn_dim = 32;
        assert!(ModelParams::load(&path, &wrong).is_err());

        let mut named: BTreeMap<String, Tensor> =
            p.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        named.insert("rogue".into(), Tensor::zeros(&[1]));
        write_checkpoint(&path, &named).unwrap();
        assert!(ModelParams::load(&path, &c).is_err());

        // Incomplete qcross entry (missing layer1) is rejected.
        let mut named: BTreeMap<String, Tensor> =
            p.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        named.insert(
            "qcross/shared/layer0".into(),
            Tensor::zeros(&[c.hidden_dim, c.hidden_dim]),
        );
        write_checkpoint(&path, &named).unwrap();
        assert!(ModelParams::load(&path, &c).is_err());
    }

    #[test]
    fn bias_classification_matches_naming_scheme() {
        assert!(ModelParams::is_bias_name("layer0/attn/bq"));
        assert!(ModelParams::is_bias_name("layer3/ffn/b2"));
        assert!(ModelParams::is_bias_name("embed/ln/beta"));
        assert!(ModelParams::is_bias_name("pooler/b"));
        assert!(!ModelParams::is_bias_name("pooler/W"));
        assert!(!ModelParams::is_bias_name("layer0/attn/ln/gamma"));
        assert!(!ModelParams::is_bias_name("qcross/shared/layer0"));
        assert!(ModelParams::is_encoder_bias("layer0/attn/bq"));
        assert!(ModelParams::is_encoder_bias("embed/ln/beta"));
        assert!(!ModelParams::is_encoder_bias("pooler/b"));
        assert!(!ModelParams::is_encoder_bias("mlm/b1"));
    }

    #[test]
    fn group_hash_tracks_only_selected_tensors() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ModelParams::init(&c, &mut rng).unwrap();
        let bias_before = p.group_hash(ModelParams::is_bias_name);
        let weight_before = p.group_hash(|n| !ModelParams::is_bias_name(n));
        p.get_mut("layer0/attn/bq").unwrap().data_mut()[0] = 7.0;
        assert_ne!(bias_before, p.group_hash(ModelParams::is_bias_name));
        assert_eq!(weight_before, p.group_hash(|n| !ModelParams::is_bias_name(n)));
    }
}
