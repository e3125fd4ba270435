//! Training protocols: classifier fine-tuning (full or bias-only), masked
//! token pretraining, and cross-query-only pretraining on parallel text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{assemble_example, ReasoningExample, TokenSequence, MASK};
use crate::masks::{tag_sequence, AttnMasks, LanguageTagVector};
use crate::model::{
    build_eval_masks, build_train_masks, AttentionScheme, Encoder, ForwardPass, ModelConfig,
    ModelParams, QcrossKey,
};
use crate::{Error, Result};

use super::optim::{adamw_step, lr_at, AdamHyper, AdamState, TrainableSet};

/// Fraction of content positions hidden per masked-token pass.
pub const MLM_MASK_RATE: f64 = 0.15;

/// What a training run updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// Update only one cross-query registry entry, on parallel text.
    #[serde(rename = "pretrain-qcross")]
    PretrainQcross,
    /// Update every parameter, on the classification objective.
    #[serde(rename = "full-ft")]
    FullFt,
    /// Update encoder biases plus pooler and classifier only.
    #[serde(rename = "bitfit")]
    Bitfit,
    /// Update every parameter, on the masked-token objective.
    #[serde(rename = "mlm")]
    Mlm,
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub protocol: Protocol,
    /// Epoch budget for epoch-driven protocols (fine-tuning).
    pub epochs: usize,
    /// Step budget for iteration-driven protocols (masked-token training).
    pub iterations: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Fraction of total steps spent warming up; in [0, 1).
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    /// Train three epochs on the depth-0 subset before the full dataset.
    pub curriculum: bool,
    pub seed: u64,
    /// Stop fine-tuning early once dev accuracy reaches this value.
    pub target_dev_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            protocol: Protocol::FullFt,
            epochs: 10,
            iterations: 0,
            batch_size: 16,
            peak_lr: 1e-3,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            curriculum: false,
            seed: 0,
            target_dev_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::config(format!(
                "warmup_ratio must lie in [0, 1), got {}",
                self.warmup_ratio
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !self.peak_lr.is_finite() || self.peak_lr < 0.0 {
            return Err(Error::config(format!(
                "peak_lr must be a finite non-negative number, got {}",
                self.peak_lr
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::config(format!(
                "weight_decay must be a finite non-negative number, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            weight_decay: self.weight_decay,
            ..AdamHyper::default()
        }
    }
}

/// One metrics-log entry; `dev_accuracy` is filled on epoch-end rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub phase: String,
    pub lr: f64,
    pub loss: f64,
    pub dev_accuracy: Option<f64>,
}

/// Render the metrics log as `step,phase,lr,loss,dev_accuracy` CSV.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("step,phase,lr,loss,dev_accuracy\n");
    for r in rows {
        let dev = r
            .dev_accuracy
            .map(|a| format!("{a}"))
            .unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.step, r.phase, r.lr, r.loss, dev);
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, metrics_to_csv(rows))?;
    Ok(())
}

/// Independent RNG streams derived from one seed, so consuming draws for one
/// purpose never shifts another purpose's sequence. Streams 0–3 are reserved
/// by the training loops; [`STREAM_INIT`] is free for parameter
/// initialization.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_SHUFFLE: u64 = 0;
const STREAM_MASKS: u64 = 1;
const STREAM_MLM: u64 = 2;
const STREAM_MLM_EVAL: u64 = 3;
/// Conventional stream for drawing initial parameters.
pub const STREAM_INIT: u64 = 4;

/// One ordered stage of a fine-tuning run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub name: String,
    /// Indices into the training dataset this phase may draw from.
    pub indices: Vec<usize>,
    pub epochs: usize,
}

/// Split the epoch budget into ordered phases. With the curriculum enabled,
/// the first three epochs draw only items solvable without rule chaining
/// (depth ≤ 0); the remaining epochs use the whole dataset.
pub fn curriculum_plan(cfg: &TrainConfig, data: &[ReasoningExample]) -> Result<Vec<Phase>> {
    let all: Vec<usize> = (0..data.len()).collect();
    if !cfg.curriculum {
        return Ok(vec![Phase {
            name: "full".to_string(),
            indices: all,
            epochs: cfg.epochs,
        }]);
    }
    if !data.iter().any(|ex| ex.depth == 0) {
        return Err(Error::config(
            "curriculum enabled but the dataset has no depth-0 items",
        ));
    }
    let easy: Vec<usize> = (0..data.len()).filter(|&i| data[i].depth <= 0).collect();
    let head = cfg.epochs.min(3);
    Ok(vec![
        Phase {
            name: "depth0".to_string(),
            indices: easy,
            epochs: head,
        },
        Phase {
            name: "full".to_string(),
            indices: all,
            epochs: cfg.epochs - head,
        },
    ])
}

/// Result of a classifier fine-tuning run.
#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: ModelParams,
    pub metrics: Vec<MetricsRow>,
    pub epochs_run: usize,
    pub epoch_train_accuracy: Vec<f64>,
    pub epoch_dev_accuracy: Vec<f64>,
    pub final_dev_accuracy: Option<f64>,
}

/// Result of a masked-token training run.
#[derive(Debug, Clone)]
pub struct MlmOutcome {
    pub params: ModelParams,
    pub metrics: Vec<MetricsRow>,
    /// `(step, perplexity)` on a fixed corpus slice with fixed masking.
    pub ppl_curve: Vec<(usize, f64)>,
}

/// Cross-query key a forward pass over `(ctx_lang, stmt_lang)` should use.
/// Pair-selected schemes fall back to the shared entry when no matrix for
/// the pair has been pretrained.
pub fn qcross_for_langs(
    cfg: &ModelConfig,
    params: &ModelParams,
    ctx_lang: usize,
    stmt_lang: usize,
) -> Result<Option<QcrossKey>> {
    match cfg.scheme {
        AttentionScheme::Standard | AttentionScheme::DropoutBaseline => Ok(None),
        AttentionScheme::SharedQcross => Ok(Some(QcrossKey::Shared)),
        AttentionScheme::PairQcross => Ok(Some(params.resolve_qcross(ctx_lang, stmt_lang)?)),
    }
}

struct Prepared {
    seq: TokenSequence,
    tags: LanguageTagVector,
    label: usize,
    ctx_lang: usize,
    stmt_lang: usize,
}

fn prepare(ex: &ReasoningExample) -> Result<Prepared> {
    let seq = assemble_example(ex);
    let tags = tag_sequence(&seq)?;
    Ok(Prepared {
        seq,
        tags,
        label: ex.label as usize,
        ctx_lang: ex.ctx_lang,
        stmt_lang: ex.stmt_lang,
    })
}

/// Add `scale ·` each leaf gradient into the accumulator, trainable names only.
fn accumulate_grads(
    pass: &ForwardPass,
    loss: crate::tensor::Var,
    scale: f64,
    trainable: &TrainableSet,
    into: &mut BTreeMap<String, Vec<f64>>,
) {
    let _ = loss;
    for (name, var) in &pass.leaves {
        if !trainable.contains(name) {
            continue;
        }
        let g = pass.tape.grad(*var);
        let slot = into
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; g.len()]);
        for (s, x) in slot.iter_mut().zip(g) {
            *s += scale * x;
        }
    }
}

fn argmax2(logits: &[f64]) -> usize {
    usize::from(logits[1] > logits[0])
}

/// Deterministic dev-set accuracy under evaluation-time masks.
fn classifier_accuracy(
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &[Prepared],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("accuracy over an empty dataset"));
    }
    let enc = Encoder::new(cfg, params);
    let mut correct = 0usize;
    for p in data {
        let masks = build_eval_masks(cfg, &p.tags)?;
        let key = qcross_for_langs(cfg, params, p.ctx_lang, p.stmt_lang)?;
        let pass = enc.classify(&p.seq, &masks, key, false)?;
        let logits = pass.tape.value(pass.logits);
        if argmax2(logits.data()) == p.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Fine-tune the classifier objective under the configured protocol.
///
/// `full-ft` updates everything; `bitfit` updates exactly the encoder biases
/// plus pooler and classifier, leaving every other weight bit-identical.
/// Masks are drawn fresh per batch element per step in train mode.
pub fn finetune(
    cfg: &ModelConfig,
    params: ModelParams,
    tcfg: &TrainConfig,
    train_data: &[ReasoningExample],
    dev_data: &[ReasoningExample],
) -> Result<FinetuneOutcome> {
    tcfg.validate()?;
    let trainable = match tcfg.protocol {
        Protocol::FullFt => TrainableSet::full(&params),
        Protocol::Bitfit => TrainableSet::bitfit(&params),
        other => {
            return Err(Error::config(format!(
                "finetune expects the full-ft or bitfit protocol, got {other:?}"
            )))
        }
    };
    if train_data.is_empty() {
        return Err(Error::config("fine-tuning requires a non-empty dataset"));
    }
    if tcfg.epochs == 0 {
        return Err(Error::config("fine-tuning requires at least one epoch"));
    }
    let mut params = params;
    let train: Vec<Prepared> = train_data.iter().map(prepare).collect::<Result<_>>()?;
    let dev: Vec<Prepared> = dev_data.iter().map(prepare).collect::<Result<_>>()?;
    let phases = curriculum_plan(tcfg, train_data)?;
    let batches_of = |n: usize| n.div_ceil(tcfg.batch_size);
    let total_steps: usize = phases
        .iter()
        .map(|p| p.epochs * batches_of(p.indices.len()))
        .sum();

    let mut shuffle_rng = stream_rng(tcfg.seed, STREAM_SHUFFLE);
    let mut mask_rng = stream_rng(tcfg.seed, STREAM_MASKS);
    let mut state = AdamState::default();
    let hyper = tcfg.hyper();
    let mut metrics = Vec::new();
    let mut epoch_train_accuracy = Vec::new();
    let mut epoch_dev_accuracy = Vec::new();
    let mut step = 0usize;
    let mut epochs_run = 0usize;
    let mut stop = false;

    for phase in &phases {
        if stop || phase.epochs == 0 || phase.indices.is_empty() {
            continue;
        }
        for _ in 0..phase.epochs {
            let mut order = phase.indices.clone();
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            let mut epoch_batches = 0usize;
            let mut correct = 0usize;
            for chunk in order.chunks(tcfg.batch_size) {
                let lr = lr_at(step, total_steps, tcfg.peak_lr, tcfg.warmup_ratio);
                let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                let mut batch_loss = 0.0;
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let p = &train[i];
                    let masks = build_train_masks(cfg, &p.tags, &mut mask_rng)?;
                    let key = qcross_for_langs(cfg, &params, p.ctx_lang, p.stmt_lang)?;
                    let enc = Encoder::new(cfg, &params);
                    let mut pass = enc.classify(&p.seq, &masks, key, false)?;
                    let loss = pass.tape.cross_entropy(pass.logits, &[p.label])?;
                    pass.tape.backward(loss)?;
                    let l = pass.tape.value(loss).data()[0];
                    if !l.is_finite() {
                        return Err(Error::numeric(format!("step {step}: non-finite loss")));
                    }
                    batch_loss += scale * l;
                    if argmax2(pass.tape.value(pass.logits).data()) == p.label {
                        correct += 1;
                    }
                    accumulate_grads(&pass, loss, scale, &trainable, &mut grads);
                }
                adamw_step(&mut params, &grads, &trainable, &mut state, lr, &hyper)?;
                metrics.push(MetricsRow {
                    step,
                    phase: phase.name.clone(),
                    lr,
                    loss: batch_loss,
                    dev_accuracy: None,
                });
                epoch_loss += batch_loss;
                epoch_batches += 1;
                step += 1;
            }
            epochs_run += 1;
            epoch_train_accuracy.push(correct as f64 / order.len() as f64);
            if !dev.is_empty() {
                let acc = classifier_accuracy(cfg, &params, &dev)?;
                epoch_dev_accuracy.push(acc);
                metrics.push(MetricsRow {
                    step,
                    phase: phase.name.clone(),
                    lr: lr_at(step.min(total_steps), total_steps, tcfg.peak_lr, tcfg.warmup_ratio),
                    loss: epoch_loss / epoch_batches.max(1) as f64,
                    dev_accuracy: Some(acc),
                });
                if tcfg.target_dev_accuracy.is_some_and(|t| acc >= t) {
                    stop = true;
                    break;
                }
            }
        }
    }
    let final_dev_accuracy = epoch_dev_accuracy.last().copied();
    Ok(FinetuneOutcome {
        params,
        metrics,
        epochs_run,
        epoch_train_accuracy,
        epoch_dev_accuracy,
        final_dev_accuracy,
    })
}

/// Hide a fraction of content positions behind the mask token.
///
/// Draws one Bernoulli per non-special position; if none fires, one content
/// position is forced so every pass has a target. The returned sequence keeps
/// the original special flags (they describe layout, not current tokens), and
/// targets hold the original token ids at the masked positions.
pub fn apply_mlm_mask(
    seq: &TokenSequence,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(TokenSequence, Vec<usize>, Vec<usize>)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::contract(format!(
            "mask rate must lie in (0, 1], got {rate}"
        )));
    }
    let candidates: Vec<usize> = (0..seq.len()).filter(|&i| !seq.special[i]).collect();
    if candidates.is_empty() {
        return Err(Error::contract(
            "sequence has no content positions to mask",
        ));
    }
    let mut positions: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(rate))
        .collect();
    if positions.is_empty() {
        positions.push(candidates[rng.gen_range(0..candidates.len())]);
    }
    let mut masked = seq.clone();
    let mut targets = Vec::with_capacity(positions.len());
    for &p in &positions {
        targets.push(masked.tokens[p] as usize);
        masked.tokens[p] = MASK;
    }
    Ok((masked, positions, targets))
}

/// Mean masked-token perplexity over a fixed slice with fixed masking.
fn mlm_perplexity(
    cfg: &ModelConfig,
    params: &ModelParams,
    slice: &[(TokenSequence, LanguageTagVector, usize, usize)],
    qcross: Option<QcrossKey>,
    seed: u64,
) -> Result<f64> {
    let enc = Encoder::new(cfg, params);
    let mut eval_rng = stream_rng(seed, STREAM_MLM_EVAL);
    let mut total_nll = 0.0;
    let mut total_positions = 0usize;
    for (seq, tags, ctx_lang, stmt_lang) in slice {
        let (masked, positions, targets) = apply_mlm_mask(seq, MLM_MASK_RATE, &mut eval_rng)?;
        let masks = build_eval_masks(cfg, tags)?;
        let key = match qcross {
            Some(k) => Some(k),
            None => qcross_for_langs(cfg, params, *ctx_lang, *stmt_lang)?,
        };
        let mut pass = enc.mlm(&masked, &positions, &masks, key)?;
        let loss = pass.tape.cross_entropy(pass.logits, &targets)?;
        let l = pass.tape.value(loss).data()[0];
        total_nll += l * targets.len() as f64;
        total_positions += targets.len();
    }
    Ok((total_nll / total_positions as f64).exp())
}

/// Iteration-driven masked-token training shared by backbone pretraining and
/// cross-query pretraining. `qcross_override` pins one registry entry for
/// every pass; otherwise the key is resolved per item from its languages.
fn mlm_loop(
    cfg: &ModelConfig,
    mut params: ModelParams,
    tcfg: &TrainConfig,
    corpus: &[(TokenSequence, usize, usize)],
    trainable: TrainableSet,
    qcross_override: Option<QcrossKey>,
) -> Result<MlmOutcome> {
    tcfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::config(
            "masked-token training requires a non-empty corpus",
        ));
    }
    let items: Vec<(TokenSequence, LanguageTagVector, usize, usize)> = corpus
        .iter()
        .map(|(seq, a, b)| Ok((seq.clone(), tag_sequence(seq)?, *a, *b)))
        .collect::<Result<_>>()?;
    let held_out = &items[..items.len().min(64)];

    let mut pick_rng = stream_rng(tcfg.seed, STREAM_SHUFFLE);
    let mut mask_rng = stream_rng(tcfg.seed, STREAM_MASKS);
    let mut mlm_rng = stream_rng(tcfg.seed, STREAM_MLM);
    let mut state = AdamState::default();
    let hyper = tcfg.hyper();
    let mut metrics = Vec::new();
    let mut ppl_curve = Vec::new();
    let eval_every = (tcfg.iterations / 10).max(1);

    let ppl = mlm_perplexity(cfg, &params, held_out, qcross_override, tcfg.seed)?;
    ppl_curve.push((0, ppl));

    for step in 0..tcfg.iterations {
        let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut batch_loss = 0.0;
        let scale = 1.0 / tcfg.batch_size as f64;
        let lr = lr_at(step, tcfg.iterations, tcfg.peak_lr, tcfg.warmup_ratio);
        for _ in 0..tcfg.batch_size {
            let (seq, tags, ctx_lang, stmt_lang) = &items[pick_rng.gen_range(0..items.len())];
            let (masked, positions, targets) = apply_mlm_mask(seq, MLM_MASK_RATE, &mut mlm_rng)?;
            let masks: AttnMasks = build_train_masks(cfg, tags, &mut mask_rng)?;
            let key = match qcross_override {
                Some(k) => Some(k),
                None => qcross_for_langs(cfg, &params, *ctx_lang, *stmt_lang)?,
            };
            let enc = Encoder::new(cfg, &params);
            let mut pass = enc.mlm(&masked, &positions, &masks, key)?;
            let loss = pass.tape.cross_entropy(pass.logits, &targets)?;
            pass.tape.backward(loss)?;
            let l = pass.tape.value(loss).data()[0];
            if !l.is_finite() {
                return Err(Error::numeric(format!("step {step}: non-finite loss")));
            }
            batch_loss += scale * l;
            accumulate_grads(&pass, loss, scale, &trainable, &mut grads);
        }
        adamw_step(&mut params, &grads, &trainable, &mut state, lr, &hyper)?;
        metrics.push(MetricsRow {
            step,
            phase: "mlm".to_string(),
            lr,
            loss: batch_loss,
            dev_accuracy: None,
        });
        if (step + 1) % eval_every == 0 || step + 1 == tcfg.iterations {
            let ppl = mlm_perplexity(cfg, &params, held_out, qcross_override, tcfg.seed)?;
            ppl_curve.push((step + 1, ppl));
        }
    }
    Ok(MlmOutcome {
        params,
        metrics,
        ppl_curve,
    })
}

/// Masked-token training of the whole model (backbone pretraining, or the
/// code-switched-continuation baseline). Works under any scheme; single-query
/// schemes take no cross-query key.
pub fn mlm_train(
    cfg: &ModelConfig,
    params: ModelParams,
    tcfg: &TrainConfig,
    corpus: &[(TokenSequence, usize, usize)],
) -> Result<MlmOutcome> {
    if tcfg.protocol != Protocol::Mlm {
        return Err(Error::config(format!(
            "mlm_train expects the mlm protocol, got {:?}",
            tcfg.protocol
        )));
    }
    let trainable = TrainableSet::full(&params);
    mlm_loop(cfg, params, tcfg, corpus, trainable, None)
}

/// Pretrain exactly one cross-query registry entry on parallel text; every
/// other parameter keeps its bit pattern. Zero iterations return the input
/// checkpoint unchanged (the registry entry is not even added).
pub fn pretrain_qcross(
    cfg: &ModelConfig,
    params: ModelParams,
    tcfg: &TrainConfig,
    key: QcrossKey,
    corpus: &[(TokenSequence, usize, usize)],
) -> Result<MlmOutcome> {
    if tcfg.protocol != Protocol::PretrainQcross {
        return Err(Error::config(format!(
            "pretrain_qcross expects the pretrain-qcross protocol, got {:?}",
            tcfg.protocol
        )));
    }
    if !cfg.scheme.uses_qcross() {
        return Err(Error::config(format!(
            "scheme {:?} has no cross-query matrix to pretrain",
            cfg.scheme
        )));
    }
    if tcfg.iterations == 0 {
        return Ok(MlmOutcome {
            params,
            metrics: Vec::new(),
            ppl_curve: Vec::new(),
        });
    }
    let mut params = params;
    params.add_qcross(cfg, key)?;
    let trainable = TrainableSet::qcross_only(key, cfg.n_layers);
    mlm_loop(cfg, params, tcfg, corpus, trainable, Some(key))
}

/// Assemble a classification corpus into `(sequence, ctx_lang, stmt_lang)`
/// triples for masked-token training.
pub fn mlm_items_from_examples(data: &[ReasoningExample]) -> Vec<(TokenSequence, usize, usize)> {
    data.iter()
        .map(|ex| (assemble_example(ex), ex.ctx_lang, ex.stmt_lang))
        .collect()
}

/// Convert translation-pair items into masked-token training triples,
/// reading each segment's language off the token tags.
pub fn mlm_items_from_parallel(
    items: &[crate::data::ParallelItem],
) -> Result<Vec<(TokenSequence, usize, usize)>> {
    items
        .iter()
        .map(|item| {
            let seq = item.to_sequence()?;
            let segs = seq.segments();
            let lang_of = |seg: usize| {
                seq.tags
                    .iter()
                    .zip(&segs)
                    .find_map(|(t, &s)| if s == seg { t.lang() } else { None })
                    .ok_or_else(|| {
                        Error::data(format!("parallel item has no content in segment {seg}"))
                    })
            };
            let a = lang_of(0)?;
            let b = lang_of(1)?;
            Ok((seq, a, b))
        })
        .collect()
}
