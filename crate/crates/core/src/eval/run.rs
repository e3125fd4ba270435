//! Accuracy evaluation of one checkpoint on one labeled dataset.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{assemble_example, write_jsonl, ReasoningExample};
use crate::masks::tag_sequence;
use crate::model::{build_eval_masks, Encoder, ModelConfig, ModelParams, QcrossKey};
use crate::train::qcross_for_langs;
use crate::{Error, Result};

/// The anchor language every code-switched setting shares.
pub const ANCHOR_LANG: usize = 0;

/// Language assignment of an evaluation cell. Code-switched settings pair
/// the anchor language with one other, in either direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvalSetting {
    /// Context and statement in the same language.
    Mono(usize),
    /// Context in the anchor language, statement in language `x`.
    AnchorX(usize),
    /// Context in language `x`, statement in the anchor language.
    XAnchor(usize),
}

impl EvalSetting {
    pub fn validate(self) -> Result<()> {
        match self {
            EvalSetting::Mono(_) => Ok(()),
            EvalSetting::AnchorX(x) | EvalSetting::XAnchor(x) => {
                if x == ANCHOR_LANG {
                    Err(Error::contract(
                        "code-switched settings need a language distinct from the anchor",
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `(context language, statement language)` this setting evaluates.
    pub fn languages(self) -> (usize, usize) {
        match self {
            EvalSetting::Mono(l) => (l, l),
            EvalSetting::AnchorX(x) => (ANCHOR_LANG, x),
            EvalSetting::XAnchor(x) => (x, ANCHOR_LANG),
        }
    }

    /// Setting kind for report columns.
    pub fn kind(self) -> &'static str {
        match self {
            EvalSetting::Mono(_) => "monolingual",
            EvalSetting::AnchorX(_) => "anchor-X",
            EvalSetting::XAnchor(_) => "X-anchor",
        }
    }

    /// Language (monolingual) or `ctx-stmt` pair for report columns.
    pub fn lang_or_pair(self) -> String {
        let (c, s) = self.languages();
        match self {
            EvalSetting::Mono(l) => format!("{l}"),
            _ => format!("{c}-{s}"),
        }
    }
}

impl fmt::Display for EvalSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalSetting::Mono(l) => write!(f, "mono-{l}"),
            EvalSetting::AnchorX(x) => write!(f, "anchor-x-{x}"),
            EvalSetting::XAnchor(x) => write!(f, "x-anchor-{x}"),
        }
    }
}

impl FromStr for EvalSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_lang = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::config(format!("invalid evaluation setting `{s}`")))
        };
        let setting = if let Some(rest) = s.strip_prefix("anchor-x-") {
            EvalSetting::AnchorX(parse_lang(rest)?)
        } else if let Some(rest) = s.strip_prefix("x-anchor-") {
            EvalSetting::XAnchor(parse_lang(rest)?)
        } else if let Some(rest) = s.strip_prefix("mono-") {
            EvalSetting::Mono(parse_lang(rest)?)
        } else {
            return Err(Error::config(format!("invalid evaluation setting `{s}`")));
        };
        setting.validate()?;
        Ok(setting)
    }
}

/// One prediction-dump line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub idx: usize,
    pub pred: usize,
    pub label: usize,
}

/// Result of evaluating one checkpoint on one dataset.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// `correct / total`, both exact integer counts.
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub predictions: Vec<Prediction>,
    /// Union of parameter names every forward pass read.
    pub params_read: BTreeSet<String>,
}

/// Evaluate accuracy under evaluation-mode masks. For pair-selected schemes,
/// `qcross_override` pins the registry key for every pass (the swap
/// experiment); otherwise the key follows the setting's language pair,
/// falling back to the shared entry when that pair has no matrix.
///
/// Side-effect-free: `params` is only read.
pub fn evaluate(
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &[ReasoningExample],
    setting: EvalSetting,
    qcross_override: Option<QcrossKey>,
) -> Result<EvalOutcome> {
    setting.validate()?;
    if data.is_empty() {
        return Err(Error::contract(format!(
            "evaluation of {setting} got an empty dataset"
        )));
    }
    let langs = setting.languages();
    let enc = Encoder::new(cfg, params);
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(data.len());
    let mut params_read = BTreeSet::new();
    for (idx, ex) in data.iter().enumerate() {
        if (ex.ctx_lang, ex.stmt_lang) != langs {
            return Err(Error::contract(format!(
                "example {idx} has languages ({}, {}) but setting {setting} expects ({}, {})",
                ex.ctx_lang, ex.stmt_lang, langs.0, langs.1
            )));
        }
        let seq = assemble_example(ex);
        let tags = tag_sequence(&seq)?;
        let masks = build_eval_masks(cfg, &tags)?;
        let key = match qcross_override {
            Some(k) => Some(k),
            None => qcross_for_langs(cfg, params, ex.ctx_lang, ex.stmt_lang)?,
        };
        let pass = enc.classify(&seq, &masks, key, false)?;
        let logits = pass.tape.value(pass.logits);
        let pred = usize::from(logits.data()[1] > logits.data()[0]);
        let label = ex.label as usize;
        if pred == label {
            correct += 1;
        }
        predictions.push(Prediction { idx, pred, label });
        params_read.extend(pass.leaves.keys().cloned());
    }
    Ok(EvalOutcome {
        accuracy: correct as f64 / data.len() as f64,
        correct,
        total: data.len(),
        predictions,
        params_read,
    })
}

/// Dump predictions as JSONL lines `{"idx":…,"pred":…,"label":…}`.
pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    write_jsonl(path, predictions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_mix_dataset, build_pair_dataset, LanguageRegistry, TheoryConfig};
    use crate::model::AttentionScheme;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn registry() -> LanguageRegistry {
        LanguageRegistry::new(4, 6, 6, &[2, 3]).unwrap()
    }

    fn theory_cfg() -> TheoryConfig {
        TheoryConfig {
            n_entities: 5,
            n_attributes: 5,
            n_facts: 4,
            n_rules: 3,
            target_depth: 0,
            n_statements: 4,
        }
    }

    fn tiny_cfg(reg: &LanguageRegistry, scheme: AttentionScheme) -> ModelConfig {
        let mut cfg = ModelConfig::default_for_vocab(reg.vocab_size(), scheme);
        cfg.hidden_dim = 8;
        cfg.n_layers = 2;
        cfg.n_heads = 2;
        cfg.ffn_dim = 12;
        cfg.max_seq_len = 64;
        cfg
    }

    #[test]
    fn setting_round_trips_and_validates() {
        for s in [
            EvalSetting::Mono(2),
            EvalSetting::AnchorX(3),
            EvalSetting::XAnchor(1),
        ] {
            let text = s.to_string();
            assert_eq!(text.parse::<EvalSetting>().unwrap(), s);
        }
        assert_eq!(EvalSetting::Mono(2).languages(), (2, 2));
        assert_eq!(EvalSetting::AnchorX(3).languages(), (0, 3));
        assert_eq!(EvalSetting::XAnchor(3).languages(), (3, 0));
        assert!(EvalSetting::AnchorX(0).validate().is_err());
        assert!("anchor-x-0".parse::<EvalSetting>().is_err());
        assert!("bogus".parse::<EvalSetting>().is_err());
        assert_eq!(EvalSetting::Mono(2).lang_or_pair(), "2");
        assert_eq!(EvalSetting::XAnchor(3).lang_or_pair(), "3-0");
    }

    #[test]
    fn accuracy_is_deterministic_and_side_effect_free() {
        let reg = registry();
        let cfg = tiny_cfg(&reg, AttentionScheme::Standard);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let mut data_rng = ChaCha8Rng::seed_from_u64(2);
        let data = build_pair_dataset(&reg, &theory_cfg(), (0, 2), 12, &mut data_rng).unwrap();
        let before = params.group_hash(|_| true);
        let a = evaluate(&cfg, &params, &data, EvalSetting::AnchorX(2), None).unwrap();
        let b = evaluate(&cfg, &params, &data, EvalSetting::AnchorX(2), None).unwrap();
        assert_eq!(params.group_hash(|_| true), before);
        assert_eq!(a.accuracy, b.accuracy);
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.correct + (a.total - a.correct), a.total);
        assert!((a.accuracy - a.correct as f64 / a.total as f64).abs() == 0.0);
    }

    #[test]
    fn language_mismatch_is_a_contract_error() {
        let reg = registry();
        let cfg = tiny_cfg(&reg, AttentionScheme::Standard);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let mut data_rng = ChaCha8Rng::seed_from_u64(4);
        let data = build_pair_dataset(&reg, &theory_cfg(), (0, 2), 4, &mut data_rng).unwrap();
        let err = evaluate(&cfg, &params, &data, EvalSetting::Mono(0), None).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
        let err = evaluate(&cfg, &params, &[], EvalSetting::Mono(0), None).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
        // Mixed datasets fail the single-setting check too.
        let mut mix_rng = ChaCha8Rng::seed_from_u64(5);
        let mix = build_mix_dataset(&reg, &theory_cfg(), 0, 1, 8, &mut mix_rng).unwrap();
        assert!(evaluate(&cfg, &params, &mix, EvalSetting::Mono(0), None).is_err());
    }

    #[test]
    fn random_model_sits_near_chance_on_a_balanced_set() {
        let reg = registry();
        let cfg = tiny_cfg(&reg, AttentionScheme::Standard);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let mut data_rng = ChaCha8Rng::seed_from_u64(7);
        let data = build_pair_dataset(&reg, &theory_cfg(), (0, 1), 2000, &mut data_rng).unwrap();
        let out = evaluate(&cfg, &params, &data, EvalSetting::AnchorX(1), None).unwrap();
        assert!(
            (0.45..=0.55).contains(&out.accuracy),
            "accuracy {}",
            out.accuracy
        );
    }

    #[test]
    fn qcross_swap_changes_only_registry_reads() {
        let reg = registry();
        let cfg = tiny_cfg(&reg, AttentionScheme::PairQcross);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        params.add_qcross(&cfg, QcrossKey::pair(0, 1)).unwrap();
        params.add_qcross(&cfg, QcrossKey::pair(0, 2)).unwrap();
        let mut data_rng = ChaCha8Rng::seed_from_u64(9);
        let data = build_pair_dataset(&reg, &theory_cfg(), (0, 2), 4, &mut data_rng).unwrap();
        let native = evaluate(&cfg, &params, &data, EvalSetting::AnchorX(2), None).unwrap();
        let swapped = evaluate(
            &cfg,
            &params,
            &data,
            EvalSetting::AnchorX(2),
            Some(QcrossKey::pair(0, 1)),
        )
        .unwrap();
        let only_native: Vec<_> = native.params_read.difference(&swapped.params_read).collect();
        let only_swapped: Vec<_> = swapped.params_read.difference(&native.params_read).collect();
        assert!(only_native.iter().all(|n| n.starts_with("qcross/pair-0-2/")));
        assert!(only_swapped.iter().all(|n| n.starts_with("qcross/pair-0-1/")));
        assert_eq!(only_native.len(), cfg.n_layers);
        assert_eq!(only_swapped.len(), cfg.n_layers);
    }

    #[test]
    fn pair_scheme_without_pair_matrix_falls_back_to_shared() {
        let reg = registry();
        let cfg = tiny_cfg(&reg, AttentionScheme::PairQcross);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        params.add_qcross(&cfg, QcrossKey::Shared).unwrap();
        let mut data_rng = ChaCha8Rng::seed_from_u64(11);
        let data = build_pair_dataset(&reg, &theory_cfg(), (0, 3), 3, &mut data_rng).unwrap();
        let out = evaluate(&cfg, &params, &data, EvalSetting::AnchorX(3), None).unwrap();
        assert!(out
            .params_read
            .iter()
            .any(|n| n.starts_with("qcross/shared/")));
        assert!(!out.params_read.iter().any(|n| n.contains("pair-")));
    }

    #[test]
    fn prediction_dump_round_trips_as_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let preds = vec![
            Prediction { idx: 0, pred: 1, label: 1 },
            Prediction { idx: 1, pred: 0, label: 1 },
        ];
        write_predictions(&path, &preds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "{\"idx\":0,\"pred\":1,\"label\":1}"
        );
        let back: Vec<Prediction> = crate::data::read_jsonl(&path).unwrap();
        assert_eq!(back, preds);
    }
}
