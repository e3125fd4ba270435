//! Attention-pattern stability between in-language and code-switched
//! renderings of the same content.

use serde::Serialize;

use crate::data::StabilityPair;
use crate::masks::tag_sequence;
use crate::model::{build_eval_masks, Encoder, ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::train::qcross_for_langs;
use crate::{Error, Result};

/// Jensen–Shannon divergence (base 2) between two probability rows.
///
/// Bounded in [0, 1]; exactly 0 for identical rows because every term
/// reduces to `p·log2(1) = 0` with no rounding.
pub fn jsd_base2(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::contract(format!(
            "divergence of rows with lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a < 0.0 || b < 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::numeric(format!(
                "divergence over invalid probabilities {a}, {b}"
            )));
        }
        let m = 0.5 * (a + b);
        if a > 0.0 {
            acc += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            acc += 0.5 * b * (b / m).log2();
        }
    }
    Ok(acc)
}

/// Per-layer, per-head attention similarity plus the grand mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `per_layer[layer][head]` = 1 − mean JSD over pairs and rows.
    pub per_layer: Vec<Vec<f64>>,
    /// Mean over layers, heads, pairs, and rows.
    pub aggregate: f64,
    pub n_pairs: usize,
}

impl StabilityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn traced_attention(
    cfg: &ModelConfig,
    params: &ModelParams,
    seq: &crate::data::TokenSequence,
    ctx_lang: usize,
    stmt_lang: usize,
) -> Result<Vec<Vec<Tensor>>> {
    let tags = tag_sequence(seq)?;
    let masks = build_eval_masks(cfg, &tags)?;
    let key = qcross_for_langs(cfg, params, ctx_lang, stmt_lang)?;
    let enc = Encoder::new(cfg, params);
    let pass = enc.classify(seq, &masks, key, true)?;
    Ok(pass
        .trace
        .expect("trace requested")
        .attn)
}

/// Compare attention patterns of each pair's two renderings. Rows and
/// columns of the code-switched pass are aligned back through `pos_map`
/// before the row-wise divergence, so reversed-order statements compare
/// position-for-position.
///
/// `lang_a` is each pair's base language (both segments), `lang_b` the
/// statement language of the code-switched rendering.
pub fn attention_stability(
    cfg: &ModelConfig,
    params: &ModelParams,
    pairs: &[StabilityPair],
    lang_a: usize,
    lang_b: usize,
) -> Result<StabilityReport> {
    if pairs.is_empty() {
        return Err(Error::contract("stability over an empty pair set"));
    }
    let mut jsd_sums = vec![vec![0.0f64; cfg.n_heads]; cfg.n_layers];
    let mut row_count = 0usize;
    for pair in pairs {
        let n = pair.a.len();
        if pair.b.len() != n || pair.pos_map.len() != n {
            return Err(Error::contract(format!(
                "pair lengths disagree: {} vs {} (map {})",
                n,
                pair.b.len(),
                pair.pos_map.len()
            )));
        }
        let attn_a = traced_attention(cfg, params, &pair.a, lang_a, lang_a)?;
        let attn_b = traced_attention(cfg, params, &pair.b, lang_a, lang_b)?;
        row_count += n;
        let mut aligned_row = vec![0.0f64; n];
        for layer in 0..cfg.n_layers {
            for head in 0..cfg.n_heads {
                let pa = attn_a[layer][head].data();
                let pb = attn_b[layer][head].data();
                for i in 0..n {
                    let bi = pair.pos_map[i];
                    for j in 0..n {
                        aligned_row[j] = pb[bi * n + pair.pos_map[j]];
                    }
                    jsd_sums[layer][head] +=
                        jsd_base2(&pa[i * n..(i + 1) * n], &aligned_row)?;
                }
            }
        }
    }
    let per_layer: Vec<Vec<f64>> = jsd_sums
        .iter()
        .map(|heads| heads.iter().map(|s| 1.0 - s / row_count as f64).collect())
        .collect();
    let total: f64 = per_layer.iter().flatten().sum();
    let aggregate = total / (cfg.n_layers * cfg.n_heads) as f64;
    Ok(StabilityReport {
        per_layer,
        aggregate,
        n_pairs: pairs.len(),
    })
}
