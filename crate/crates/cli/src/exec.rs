//! Verb execution: each invocation resolves a config, creates a run
//! directory, performs the verb, and records a manifest of file hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use xattn_core::data::{
    assemble_example, build_mix_dataset, build_pair_dataset, generate_mono_corpus,
    generate_parallel_corpus, read_jsonl, write_jsonl, write_registry, ParallelItem,
    ReasoningExample,
};
use xattn_core::eval::{
    evaluate, in_language_cells, write_predictions, zero_shot_cells, EvalSetting, TransferReport,
    TransferRow, ANCHOR_LANG,
};
use xattn_core::masks::{dump_masks_json, tag_sequence};
use xattn_core::model::{build_eval_masks, Encoder, ModelConfig, ModelParams, QcrossKey};
use xattn_core::train::{
    finetune, mlm_items_from_examples, mlm_items_from_parallel, mlm_train, pretrain_qcross,
    qcross_for_langs, stream_rng, write_metrics_csv, Protocol, STREAM_INIT,
};
use xattn_core::{Error, Result};

use crate::config::{parse_config, Config};

/// Dataset generation draws from its own stream so it never collides with
/// the training streams derived from the same seed.
const STREAM_DATA: u64 = STREAM_INIT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    GenData,
    PretrainQcross,
    Train,
    Eval,
    Transfer,
    DumpAttention,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::GenData => "gen-data",
            Verb::PretrainQcross => "pretrain-qcross",
            Verb::Train => "train",
            Verb::Eval => "eval",
            Verb::Transfer => "transfer",
            Verb::DumpAttention => "dump-attention",
        }
    }
}

/// One parsed command-line invocation.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub verb: Verb,
    /// Config file; omitted means all defaults.
    pub config: Option<PathBuf>,
    /// `key=value` overrides applied on top of the file.
    pub sets: Vec<String>,
    /// Overrides the config's `seed`.
    pub seed: Option<u64>,
    /// Parent directory for the run directory (default `runs`).
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub summary: Value,
}

/// Map an error to its machine-readable class and process exit code.
/// Misconfiguration exits 2, unreadable or inconsistent data exits 3,
/// numeric failure exits 4, and internal contract violations exit 1.
pub fn error_class(err: &Error) -> (&'static str, u8) {
    match err {
        Error::Config(_) => ("config", 2),
        Error::Data(_) | Error::Parse { .. } | Error::Io(_) | Error::MissingKey { .. } => {
            ("data", 3)
        }
        Error::Numeric(_) => ("numeric", 4),
        _ => ("internal", 1),
    }
}

/// Worker cap for fan-out sections: `XATTN_THREADS` when set, otherwise the
/// machine's available parallelism.
fn thread_cap() -> Result<usize> {
    match std::env::var("XATTN_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                Error::config(format!(
                    "XATTN_THREADS must be a positive integer, got {v:?}"
                ))
            }),
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)),
    }
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Create `<out>/<verb>-<seed>-<unixtime>`, suffixing `-1`, `-2`, … on
/// collision so rapid runs never clobber each other.
fn create_run_dir(base: &Path, verb: Verb, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(base)?;
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_err(|e| Error::contract(format!("system clock before epoch: {e}")))?
        .as_secs();
    let stem = format!("{}-{}-{}", verb.name(), seed, ts);
    for k in 0..10_000 {
        let name = if k == 0 {
            stem.clone()
        } else {
            format!("{stem}-{k}")
        };
        let candidate = base.join(&name);
        match std::fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::contract("run directory namespace exhausted"))
}

/// Files a verb touched; the manifest records a SHA-256 per entry.
struct FileSet {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl FileSet {
    fn new() -> Self {
        FileSet {
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }
}

fn write_manifest(run_dir: &Path, verb: Verb, seed: u64, files: &FileSet) -> Result<()> {
    let mut inputs = BTreeMap::new();
    for path in &files.inputs {
        inputs.insert(path.display().to_string(), sha256_hex(path)?);
    }
    let mut outputs = BTreeMap::new();
    for path in &files.outputs {
        let key = path
            .strip_prefix(run_dir)
            .unwrap_or(path)
            .display()
            .to_string();
        outputs.insert(key, sha256_hex(path)?);
    }
    let manifest = json!({
        "verb": verb.name(),
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
    });
    std::fs::write(
        run_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

/// Resolve config + overrides, run the verb inside a fresh run directory,
/// and leave behind `resolved-config.json` and `manifest.json`.
pub fn execute(args: &RunArgs) -> Result<RunOutcome> {
    let mut files = FileSet::new();
    let text = match &args.config {
        Some(path) => {
            let body = std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config file {}: {e}", path.display()))
            })?;
            files.input(path.clone());
            body
        }
        None => String::new(),
    };
    let mut cfg = parse_config(&text, &args.sets)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }

    let base = args.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let run_dir = create_run_dir(&base, args.verb, cfg.seed)?;
    let resolved = run_dir.join("resolved-config.json");
    std::fs::write(&resolved, serde_json::to_string_pretty(&cfg)? + "\n")?;
    files.output(resolved);

    let summary = match args.verb {
        Verb::GenData => gen_data(&cfg, &run_dir, &mut files)?,
        Verb::PretrainQcross => run_pretrain_qcross(&cfg, &run_dir, &mut files)?,
        Verb::Train => run_train(&cfg, &run_dir, &mut files)?,
        Verb::Eval => run_eval(&cfg, &run_dir, &mut files)?,
        Verb::Transfer => run_transfer(&cfg, &run_dir, &mut files)?,
        Verb::DumpAttention => dump_attention(&cfg, &run_dir, &mut files)?,
    };

    write_manifest(&run_dir, args.verb, cfg.seed, &files)?;
    Ok(RunOutcome { run_dir, summary })
}

fn require_path(value: &str, field: &str, verb: &str) -> Result<PathBuf> {
    if value.is_empty() {
        return Err(Error::config(format!("{verb} requires the `{field}` path")));
    }
    Ok(PathBuf::from(value))
}

fn load_examples(path: &Path) -> Result<Vec<ReasoningExample>> {
    let data: Vec<ReasoningExample> = read_jsonl(path)?;
    if data.is_empty() {
        return Err(Error::data(format!("dataset {} is empty", path.display())));
    }
    Ok(data)
}

/// A dataset fed to a single evaluation setting must agree with it on every
/// example's language assignment; report the first offender by line.
fn check_setting_languages(
    data: &[ReasoningExample],
    setting: EvalSetting,
    path: &Path,
) -> Result<()> {
    let want = setting.languages();
    for (i, ex) in data.iter().enumerate() {
        if (ex.ctx_lang, ex.stmt_lang) != want {
            return Err(Error::data(format!(
                "{} line {}: languages ({}, {}) do not match setting {} = ({}, {})",
                path.display(),
                i + 1,
                ex.ctx_lang,
                ex.stmt_lang,
                setting,
                want.0,
                want.1
            )));
        }
    }
    Ok(())
}

fn gen_data(cfg: &Config, run_dir: &Path, files: &mut FileSet) -> Result<Value> {
    let reg = cfg.registry()?;
    let tcfg = cfg.theory_cfg();
    let mut rng = stream_rng(cfg.seed, STREAM_DATA);
    let data_path = run_dir.join("data.jsonl");
    let n_written = match cfg.data_kind.as_str() {
        "mono" => {
            let data = generate_mono_corpus(&reg, &tcfg, &cfg.langs, cfg.n_examples, &mut rng)?;
            write_jsonl(&data_path, &data)?;
            data.len()
        }
        "pair" => {
            let pair = cfg.pair_of("pair", &cfg.pair)?;
            let data = build_pair_dataset(&reg, &tcfg, pair, cfg.n_examples, &mut rng)?;
            write_jsonl(&data_path, &data)?;
            data.len()
        }
        "mix" => {
            let (anchor, other) = cfg.pair_of("pair", &cfg.pair)?;
            let data = build_mix_dataset(&reg, &tcfg, anchor, other, cfg.n_examples, &mut rng)?;
            write_jsonl(&data_path, &data)?;
            data.len()
        }
        "parallel" => {
            let pair = cfg.pair_of("pair", &cfg.pair)?;
            let data = generate_parallel_corpus(&reg, &tcfg, pair, cfg.n_examples, &mut rng)?;
            write_jsonl(&data_path, &data)?;
            data.len()
        }
        other => {
            return Err(Error::config(format!(
                "unknown data_kind `{other}`; expected mono, pair, mix, or parallel"
            )))
        }
    };
    files.output(data_path);
    let registry_path = run_dir.join("registry.json");
    write_registry(&registry_path, &reg)?;
    files.output(registry_path);
    Ok(json!({
        "data_kind": cfg.data_kind,
        "n_examples": n_written,
        "vocab_size": reg.vocab_size(),
    }))
}

fn load_model(cfg: &Config, verb: &str, files: &mut FileSet) -> Result<(ModelConfig, ModelParams)> {
    let reg = cfg.registry()?;
    let mcfg = cfg.model_cfg(reg.vocab_size())?;
    let path = require_path(&cfg.checkpoint, "checkpoint", verb)?;
    let params = ModelParams::load(&path, &mcfg)?;
    files.input(path);
    Ok((mcfg, params))
}

fn ppl_summary(curve: &[(usize, f64)]) -> Value {
    json!({
        "initial": curve.first().map(|&(_, p)| p),
        "final": curve.last().map(|&(_, p)| p),
    })
}

fn write_ppl_curve(run_dir: &Path, curve: &[(usize, f64)], files: &mut FileSet) -> Result<()> {
    let path = run_dir.join("ppl.json");
    let rows: Vec<Value> = curve
        .iter()
        .map(|&(step, ppl)| json!({"step": step, "perplexity": ppl}))
        .collect();
    std::fs::write(&path, serde_json::to_string_pretty(&rows)? + "\n")?;
    files.output(path);
    Ok(())
}

fn run_pretrain_qcross(cfg: &Config, run_dir: &Path, files: &mut FileSet) -> Result<Value> {
    let (mcfg, params) = load_model(cfg, "pretrain-qcross", files)?;
    let corpus_path = require_path(&cfg.corpus, "corpus", "pretrain-qcross")?;
    let items: Vec<ParallelItem> = read_jsonl(&corpus_path)?;
    files.input(corpus_path);
    let corpus = mlm_items_from_parallel(&items)?;
    if cfg.qcross_key.is_empty() {
        return Err(Error::config("pretrain-qcross requires `qcross_key`"));
    }
    let key = QcrossKey::parse(&cfg.qcross_key)?;
    let tcfg = cfg.train_cfg(Protocol::PretrainQcross)?;
    let outcome = pretrain_qcross(&mcfg, params, &tcfg, key, &corpus)?;

    let ckpt = run_dir.join("checkpoint.bin");
    outcome.params.save(&ckpt)?;
    files.output(ckpt);
    let metrics = run_dir.join("metrics.csv");
    write_metrics_csv(&metrics, &outcome.metrics)?;
    files.output(metrics);
    write_ppl_curve(run_dir, &outcome.ppl_curve, files)?;
    Ok(json!({
        "qcross_key": key.name(),
        "iterations": tcfg.iterations,
        "perplexity": ppl_summary(&outcome.ppl_curve),
    }))
}

fn run_train(cfg: &Config, run_dir: &Path, files: &mut FileSet) -> Result<Value> {
    let reg = cfg.registry()?;
    let mcfg = cfg.model_cfg(reg.vocab_size())?;
    let protocol = cfg.protocol()?;
    if protocol == Protocol::PretrainQcross {
        return Err(Error::config(
            "protocol pretrain-qcross has its own verb; run `xattn pretrain-qcross`",
        ));
    }
    let params = if cfg.checkpoint.is_empty() {
        ModelParams::init(&mcfg, &mut stream_rng(cfg.seed, STREAM_INIT))?
    } else {
        let path = PathBuf::from(&cfg.checkpoint);
        let params = ModelParams::load(&path, &mcfg)?;
        files.input(path);
        params
    };
    let tcfg = cfg.train_cfg(protocol)?;

    let (out_params, metrics, summary) = if protocol == Protocol::Mlm {
        let mut corpus = Vec::new();
        if !cfg.corpus.is_empty() {
            let path = PathBuf::from(&cfg.corpus);
            let items: Vec<ParallelItem> = read_jsonl(&path)?;
            files.input(path);
            corpus.extend(mlm_items_from_parallel(&items)?);
        }
        if !cfg.train_data.is_empty() {
            let path = PathBuf::from(&cfg.train_data);
            let data = load_examples(&path)?;
            files.input(path);
            corpus.extend(mlm_items_from_examples(&data));
        }
        if corpus.is_empty() {
            return Err(Error::config(
                "mlm training requires `corpus` and/or `train_data`",
            ));
        }
        let outcome = mlm_train(&mcfg, params, &tcfg, &corpus)?;
        write_ppl_curve(run_dir, &outcome.ppl_curve, files)?;
        let summary = json!({
            "protocol": "mlm",
            "items": corpus.len(),
            "iterations": tcfg.iterations,
            "perplexity": ppl_summary(&outcome.ppl_curve),
        });
        (outcome.params, outcome.metrics, summary)
    } else {
        let train_path = require_path(&cfg.train_data, "train_data", "train")?;
        let train_data = load_examples(&train_path)?;
        files.input(train_path);
        let dev_path = require_path(&cfg.dev_data, "dev_data", "train")?;
        let dev_data = load_examples(&dev_path)?;
        files.input(dev_path);
        let outcome = finetune(&mcfg, params, &tcfg, &train_data, &dev_data)?;
        let summary = json!({
            "protocol": cfg.protocol,
            "epochs_run": outcome.epochs_run,
            "final_dev_accuracy": outcome.final_dev_accuracy,
        });
        (outcome.params, outcome.metrics, summary)
    };

    let ckpt = run_dir.join("checkpoint.bin");
    out_params.save(&ckpt)?;
    files.output(ckpt);
    let metrics_path = run_dir.join("metrics.csv");
    write_metrics_csv(&metrics_path, &metrics)?;
    files.output(metrics_path);
    Ok(summary)
}

fn run_eval(cfg: &Config, run_dir: &Path, files: &mut FileSet) -> Result<Value> {
    let (mcfg, params) = load_model(cfg, "eval", files)?;
    if cfg.setting.is_empty() {
        return Err(Error::config(
            "eval requires `setting` (mono-L, anchor-x-L, or x-anchor-L)",
        ));
    }
    let setting: EvalSetting = cfg.setting.parse()?;
    let data_path = require_path(&cfg.eval_data, "eval_data", "eval")?;
    let data = load_examples(&data_path)?;
    check_setting_languages(&data, setting, &data_path)?;
    files.input(data_path);
    let qcross_override = if cfg.qcross_key.is_empty() {
        None
    } else {
        Some(QcrossKey::parse(&cfg.qcross_key)?)
    };
    let outcome = evaluate(&mcfg, &params, &data, setting, qcross_override)?;

    let pred_path = run_dir.join("predictions.jsonl");
    write_predictions(&pred_path, &outcome.predictions)?;
    files.output(pred_path);
    let report = json!({
        "setting": setting.to_string(),
        "accuracy": outcome.accuracy,
        "correct": outcome.correct,
        "total": outcome.total,
    });
    let report_path = run_dir.join("eval.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    files.output(report_path);
    Ok(report)
}

fn run_transfer(cfg: &Config, run_dir: &Path, files: &mut FileSet) -> Result<Value> {
    let (mcfg, params) = load_model(cfg, "transfer", files)?;
    let (anchor, other) = cfg.pair_of("trained_pair", &cfg.trained_pair)?;
    if anchor != ANCHOR_LANG {
        return Err(Error::config(format!(
            "trained_pair must start with the anchor language {ANCHOR_LANG}, got {anchor}"
        )));
    }
    let dir = require_path(&cfg.datasets_dir, "datasets_dir", "transfer")?;

    let mut cells = in_language_cells(other);
    cells.extend(zero_shot_cells(cfg.n_languages, other));

    // Load every cell's dataset up front so a missing file fails before any
    // evaluation work starts, naming the cell it belongs to.
    let mut jobs: Vec<(usize, EvalSetting, Vec<ReasoningExample>)> = Vec::new();
    for (idx, &cell) in cells.iter().enumerate() {
        let path = dir.join(format!("{cell}.jsonl"));
        if !path.is_file() {
            return Err(Error::data(format!(
                "missing dataset for transfer cell {cell}: expected {}",
                path.display()
            )));
        }
        let data = load_examples(&path)?;
        check_setting_languages(&data, cell, &path)?;
        files.input(path);
        jobs.push((idx, cell, data));
    }

    let recipe = if cfg.recipe.is_empty() {
        mcfg.scheme.name().to_string()
    } else {
        cfg.recipe.clone()
    };
    let workers = thread_cap()?.min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, xattn_core::Result<TransferRow>)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let jobs = &jobs;
            let next = &next;
            let mcfg = &mcfg;
            let params = &params;
            let recipe = &recipe;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((idx, cell, data)) = jobs.get(i) else {
                    break;
                };
                let row = evaluate(mcfg, params, data, *cell, None).map(|out| TransferRow {
                    recipe: recipe.clone(),
                    scheme: mcfg.scheme.name().to_string(),
                    setting: cell.kind().to_string(),
                    lang_or_pair: cell.lang_or_pair(),
                    seed: cfg.seed,
                    accuracy: out.accuracy,
                });
                if tx.send((*idx, row)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut indexed: Vec<(usize, xattn_core::Result<TransferRow>)> = rx.into_iter().collect();
    indexed.sort_by_key(|(idx, _)| *idx);
    let mut rows = Vec::with_capacity(indexed.len());
    for (_, row) in indexed {
        rows.push(row?);
    }

    let report = TransferReport::from_rows(rows);
    let csv_path = run_dir.join("transfer.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    files.output(csv_path);
    let json_path = run_dir.join("transfer.json");
    std::fs::write(&json_path, report.to_json()? + "\n")?;
    files.output(json_path);
    Ok(json!({
        "recipe": recipe,
        "cells": report.cells.len(),
        "rows": report.rows.len(),
        "workers": workers,
    }))
}

fn dump_attention(cfg: &Config, run_dir: &Path, files: &mut FileSet) -> Result<Value> {
    let (mcfg, params) = load_model(cfg, "dump-attention", files)?;
    let data_path = require_path(&cfg.eval_data, "eval_data", "dump-attention")?;
    let data = load_examples(&data_path)?;
    files.input(data_path);
    let qcross_override = if cfg.qcross_key.is_empty() {
        None
    } else {
        Some(QcrossKey::parse(&cfg.qcross_key)?)
    };

    let enc = Encoder::new(&mcfg, &params);
    let n = cfg.n_attention_examples.min(data.len()).max(1);
    let mut lines = Vec::with_capacity(n);
    for (idx, ex) in data.iter().take(n).enumerate() {
        let seq = assemble_example(ex);
        let tags = tag_sequence(&seq)?;
        let masks = build_eval_masks(&mcfg, &tags)?;
        let qcross = match qcross_override {
            Some(key) => Some(key),
            None => qcross_for_langs(&mcfg, &params, ex.ctx_lang, ex.stmt_lang)?,
        };
        let pass = enc.classify(&seq, &masks, qcross, true)?;
        let trace = pass
            .trace
            .ok_or_else(|| Error::contract("traced forward pass returned no trace"))?;
        let attn: Vec<Vec<Vec<f64>>> = trace
            .attn
            .iter()
            .map(|heads| heads.iter().map(|t| t.data().to_vec()).collect())
            .collect();
        let mask_value: Value = serde_json::from_str(&dump_masks_json(&masks))?;
        lines.push(json!({
            "idx": idx,
            "n": seq.len(),
            "masks": mask_value,
            "attn": attn,
        }));
    }
    let out_path = run_dir.join("attention.jsonl");
    let body: String = lines
        .iter()
        .map(|l| serde_json::to_string(l).map(|s| s + "\n"))
        .collect::<std::result::Result<String, _>>()?;
    std::fs::write(&out_path, body)?;
    files.output(out_path);
    Ok(json!({"examples": lines.len(), "layers": mcfg.n_layers, "heads": mcfg.n_heads}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_cover_every_failure_family() {
        assert_eq!(error_class(&Error::config("x")), ("config", 2));
        assert_eq!(error_class(&Error::data("x")), ("data", 3));
        assert_eq!(
            error_class(&Error::Parse {
                line: 1,
                msg: "x".into()
            }),
            ("data", 3)
        );
        assert_eq!(
            error_class(&Error::MissingKey {
                key: "a".into(),
                available: vec!["b".into()]
            }),
            ("data", 3)
        );
        assert_eq!(
            error_class(&Error::Io(std::io::Error::other("x"))),
            ("data", 3)
        );
        assert_eq!(error_class(&Error::numeric("x")), ("numeric", 4));
        assert_eq!(error_class(&Error::contract("x")), ("internal", 1));
    }

    #[test]
    fn run_dirs_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = create_run_dir(tmp.path(), Verb::GenData, 7).unwrap();
        let b = create_run_dir(tmp.path(), Verb::GenData, 7).unwrap();
        assert_ne!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().starts_with("gen-data-7-"));
        assert!(a.is_dir() && b.is_dir());
    }

    #[test]
    fn thread_cap_reads_and_validates_env() {
        // Reads the process environment, so exercise both paths in sequence.
        std::env::set_var("XATTN_THREADS", "3");
        assert_eq!(thread_cap().unwrap(), 3);
        std::env::set_var("XATTN_THREADS", "zero");
        assert!(thread_cap().is_err());
        std::env::set_var("XATTN_THREADS", "0");
        assert!(thread_cap().is_err());
        std::env::remove_var("XATTN_THREADS");
        assert!(thread_cap().unwrap() >= 1);
    }

    #[test]
    fn setting_language_check_names_offending_line() {
        let ex = ReasoningExample {
            context: vec![10],
            statement: vec![11],
            ctx_lang: 0,
            stmt_lang: 1,
            label: true,
            depth: 0,
        };
        let path = PathBuf::from("d.jsonl");
        check_setting_languages(&[ex.clone()], EvalSetting::AnchorX(1), &path).unwrap();
        let err =
            check_setting_languages(&[ex], EvalSetting::Mono(0), &path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("mono-0"), "{msg}");
    }
}
