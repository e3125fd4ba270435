//! Zero-shot transfer matrices: which cells to fill and how to report them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::data::ReasoningExample;
use crate::model::{ModelConfig, ModelParams};
use crate::{Error, Result};

use super::run::{evaluate, EvalSetting, ANCHOR_LANG};

/// One `(recipe, scheme, setting, seed)` accuracy measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferRow {
    pub recipe: String,
    pub scheme: String,
    pub setting: String,
    pub lang_or_pair: String,
    pub seed: u64,
    pub accuracy: f64,
}

/// Per-cell aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferCellSummary {
    pub recipe: String,
    pub scheme: String,
    pub setting: String,
    pub lang_or_pair: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the seeds.
    pub stddev: f64,
}

/// All measurements plus per-cell summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub rows: Vec<TransferRow>,
    pub cells: Vec<TransferCellSummary>,
}

/// Cells a model trained on `mix(L0, (L0, other))` never saw: monolingual
/// cells for every non-training language, plus every anchor-involving
/// code-switched direction except the training direction itself.
pub fn zero_shot_cells(n_languages: usize, trained_other: usize) -> Vec<EvalSetting> {
    let mut cells = Vec::new();
    for l in 0..n_languages {
        if l != ANCHOR_LANG && l != trained_other {
            cells.push(EvalSetting::Mono(l));
        }
    }
    for x in 0..n_languages {
        if x != ANCHOR_LANG && x != trained_other {
            cells.push(EvalSetting::AnchorX(x));
        }
    }
    for x in 0..n_languages {
        if x != ANCHOR_LANG {
            cells.push(EvalSetting::XAnchor(x));
        }
    }
    cells
}

/// The cells the training distribution covered.
pub fn in_language_cells(trained_other: usize) -> Vec<EvalSetting> {
    vec![
        EvalSetting::Mono(ANCHOR_LANG),
        EvalSetting::AnchorX(trained_other),
    ]
}

/// Evaluate one checkpoint over the requested cells. Every cell must come
/// with a dataset keyed by the setting's display name; a missing dataset is
/// an error naming the cell.
pub fn transfer_matrix(
    cfg: &ModelConfig,
    params: &ModelParams,
    recipe: &str,
    seed: u64,
    cells: &[EvalSetting],
    datasets: &BTreeMap<String, Vec<ReasoningExample>>,
) -> Result<Vec<TransferRow>> {
    let mut rows = Vec::with_capacity(cells.len());
    for &cell in cells {
        let data = datasets.get(&cell.to_string()).ok_or_else(|| {
            Error::data(format!("missing dataset for transfer cell {cell}"))
        })?;
        let out = evaluate(cfg, params, data, cell, None)?;
        rows.push(TransferRow {
            recipe: recipe.to_string(),
            scheme: cfg.scheme.name().to_string(),
            setting: cell.kind().to_string(),
            lang_or_pair: cell.lang_or_pair(),
            seed,
            accuracy: out.accuracy,
        });
    }
    Ok(rows)
}

impl TransferReport {
    /// Group per-seed rows into per-cell summaries.
    pub fn from_rows(rows: Vec<TransferRow>) -> Self {
        let mut groups: BTreeMap<(String, String, String, String), Vec<&TransferRow>> =
            BTreeMap::new();
        for row in &rows {
            groups
                .entry((
                    row.recipe.clone(),
                    row.scheme.clone(),
                    row.setting.clone(),
                    row.lang_or_pair.clone(),
                ))
                .or_default()
                .push(row);
        }
        let cells = groups
            .into_iter()
            .map(|((recipe, scheme, setting, lang_or_pair), group)| {
                let seeds: Vec<u64> = group.iter().map(|r| r.seed).collect();
                let accuracies: Vec<f64> = group.iter().map(|r| r.accuracy).collect();
                let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
                let var = accuracies
                    .iter()
                    .map(|a| (a - mean) * (a - mean))
                    .sum::<f64>()
                    / accuracies.len() as f64;
                TransferCellSummary {
                    recipe,
                    scheme,
                    setting,
                    lang_or_pair,
                    seeds,
                    accuracies,
                    mean,
                    stddev: var.sqrt(),
                }
            })
            .collect();
        TransferReport { rows, cells }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV of the raw per-seed rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("recipe,scheme,setting,lang_or_pair,seed,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.recipe, r.scheme, r.setting, r.lang_or_pair, r.seed, r.accuracy
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_pair_dataset, LanguageRegistry, TheoryConfig};
    use crate::model::AttentionScheme;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_shot_enumeration_matches_the_four_language_case() {
        let cells = zero_shot_cells(4, 1);
        let expected = vec![
            EvalSetting::Mono(2),
            EvalSetting::Mono(3),
            EvalSetting::AnchorX(2),
            EvalSetting::AnchorX(3),
            EvalSetting::XAnchor(1),
            EvalSetting::XAnchor(2),
            EvalSetting::XAnchor(3),
        ];
        assert_eq!(cells, expected);
        assert_eq!(
            in_language_cells(1),
            vec![EvalSetting::Mono(0), EvalSetting::AnchorX(1)]
        );
        // Two languages: nothing beyond the reverse direction is zero-shot.
        assert_eq!(zero_shot_cells(2, 1), vec![EvalSetting::XAnchor(1)]);
    }

    #[test]
    fn missing_dataset_error_names_the_cell() {
        let reg = LanguageRegistry::new(4, 6, 6, &[2, 3]).unwrap();
        let mut cfg = ModelConfig::default_for_vocab(reg.vocab_size(), AttentionScheme::Standard);
        cfg.hidden_dim = 8;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.ffn_dim = 12;
        cfg.max_seq_len = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let datasets = BTreeMap::new();
        let err = transfer_matrix(
            &cfg,
            &params,
            "full-ft",
            11,
            &[EvalSetting::AnchorX(2)],
            &datasets,
        )
        .unwrap_err();
        assert!(err.to_string().contains("anchor-x-2"), "{err}");
    }

    #[test]
    fn rows_fill_and_summaries_average_exactly() {
        let reg = LanguageRegistry::new(4, 6, 6, &[2, 3]).unwrap();
        let mut cfg = ModelConfig::default_for_vocab(reg.vocab_size(), AttentionScheme::Standard);
        cfg.hidden_dim = 8;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.ffn_dim = 12;
        cfg.max_seq_len = 64;
        let tcfg = TheoryConfig {
            n_entities: 5,
            n_attributes: 5,
            n_facts: 4,
            n_rules: 3,
            target_depth: 0,
            n_statements: 4,
        };
        let mut data_rng = ChaCha8Rng::seed_from_u64(1);
        let cell = EvalSetting::AnchorX(2);
        let mut datasets = BTreeMap::new();
        datasets.insert(
            cell.to_string(),
            build_pair_dataset(&reg, &tcfg, (0, 2), 8, &mut data_rng).unwrap(),
        );
        let mut rows = Vec::new();
        for seed in [11, 12, 13] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::init(&cfg, &mut rng).unwrap();
            rows.extend(
                transfer_matrix(&cfg, &params, "full-ft", seed, &[cell], &datasets).unwrap(),
            );
        }
        let report = TransferReport::from_rows(rows.clone());
        assert_eq!(report.cells.len(), 1);
        let cell_summary = &report.cells[0];
        assert_eq!(cell_summary.seeds, vec![11, 12, 13]);
        let hand_mean =
            (rows[0].accuracy + rows[1].accuracy + rows[2].accuracy) / 3.0;
        assert!((cell_summary.mean - hand_mean).abs() < 1e-12);
        let csv = report.to_csv();
        assert!(csv.starts_with("recipe,scheme,setting,lang_or_pair,seed,accuracy\n"));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("full-ft,standard,anchor-X,0-2,11,"));
        let json = report.to_json().unwrap();
        assert!(json.contains("\"mean\""));
    }
}
