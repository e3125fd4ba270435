use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xattn_core::data::{generate_mono_corpus, LanguageRegistry, TheoryConfig};
use xattn_core::model::{AttentionScheme, ModelConfig, ModelParams};
use xattn_core::train::{finetune, stream_rng, Protocol, TrainConfig, STREAM_INIT};

fn round2(v: &[f64]) -> Vec<f64> {
    v.iter().map(|a| (a * 100.0).round() / 100.0).collect()
}

#[test]
fn probe_layer0_twin_circuit() {
    let reg = LanguageRegistry::new(4, 16, 16, &[2, 3]).unwrap();
    let theories = TheoryConfig {
        n_entities: 16,
        n_attributes: 16,
        n_facts: 4,
        n_rules: 0,
        target_depth: 0,
        n_statements: 4,
    };
    let cfg = ModelConfig::default_for_vocab(reg.vocab_size(), AttentionScheme::Standard);
    let mut drng = ChaCha8Rng::seed_from_u64(61);
    let train = generate_mono_corpus(&reg, &theories, &[0, 1, 2, 3], 1600, &mut drng).unwrap();
    let dev = generate_mono_corpus(&reg, &theories, &[0, 1, 2, 3], 200, &mut drng).unwrap();

    // Bag-feature oracle ceiling on this shape: statement tokens both present in context.
    let mut agree = 0usize;
    let mut total = 0usize;
    for ex in train.iter().chain(dev.iter()) {
        let toks = &ex.sequence.tokens;
        let seg = ex.sequence.segments();
        let ctx: std::collections::HashSet<i64> = toks
            .iter()
            .zip(seg.iter())
            .filter(|(_, s)| **s == 0)
            .map(|(t, _)| *t)
            .collect();
        let stmt: Vec<i64> = toks
            .iter()
            .zip(seg.iter())
            .zip(ex.sequence.special.iter())
            .filter(|((_, s), sp)| **s == 1 && !**sp)
            .map(|((t, _), _)| *t)
            .collect();
        let pred = stmt.iter().all(|t| ctx.contains(t));
        if pred == ex.label {
            agree += 1;
        }
        total += 1;
    }
    println!("presence-AND ceiling on (16,16,4,0): {:.4}", agree as f64 / total as f64);

    let max_len = train
        .iter()
        .map(|e| e.sequence.tokens.len())
        .max()
        .unwrap();
    println!("max seq len: {max_len}");

    for seed in [11u64, 12, 13] {
        let mut params = ModelParams::init(&cfg, &mut stream_rng(seed, STREAM_INIT)).unwrap();
        for (name, s) in [("embed/tok", 5.0), ("embed/seg", 5.0)] {
            let t = params.get_mut(name).unwrap();
            for v in t.data_mut() {
                *v *= s;
            }
        }
        // Layer 0 only: twin-detector attention (tied Q/K at sigma 0.1) with an
        // identity value/output path so twin evidence lands in the residual.
        let wq = params.get("layer0/attn/Wq").unwrap().clone();
        let wk = params.get_mut("layer0/attn/Wk").unwrap();
        wk.data_mut().copy_from_slice(wq.data());
        for w in ["Wq", "Wk"] {
            let t = params.get_mut(&format!("layer0/attn/{w}")).unwrap();
            for v in t.data_mut() {
                *v *= 5.0;
            }
        }
        let d = cfg.d_model;
        for w in ["Wv", "Wo"] {
            let t = params.get_mut(&format!("layer0/attn/{w}")).unwrap();
            let data = t.data_mut();
            for i in 0..d {
                for j in 0..d {
                    data[i * d + j] = if i == j { 0.7 } else { 0.0 };
                }
            }
        }
        let tcfg = TrainConfig {
            protocol: Protocol::FullFt,
            epochs: 35,
            batch_size: 16,
            seed,
            peak_lr: 1e-3,
            target_dev_accuracy: Some(0.97),
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let out = finetune(&cfg, params, &tcfg, &train, &dev).unwrap();
        println!(
            "seed {seed}: {:.0}s, epochs {}",
            t0.elapsed().as_secs_f64(),
            out.epochs_run
        );
        println!("  train {:?}", round2(&out.epoch_train_accuracy));
        println!("  dev   {:?}", round2(&out.epoch_dev_accuracy));
    }
}
