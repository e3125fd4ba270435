//! Learning-rate schedule, AdamW, and trainable-parameter selection.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{ModelParams, QcrossKey};
use crate::{Error, Result};

/// Linear warmup to the peak followed by linear decay to zero.
///
/// The warmup segment covers `warmup_ratio · total_steps` steps; the peak is
/// attained exactly at the warmup boundary and the final step maps to zero.
pub fn lr_at(step: usize, total_steps: usize, peak_lr: f64, warmup_ratio: f64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    let total = total_steps as f64;
    let warm = warmup_ratio * total;
    let s = step as f64;
    if s < warm {
        peak_lr * s / warm
    } else if warm >= total {
        peak_lr
    } else {
        peak_lr * (total - s) / (total - warm)
    }
}

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second-moment buffers, allocated lazily per parameter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

/// Names eligible for optimizer updates under one protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainableSet {
    names: BTreeSet<String>,
}

impl TrainableSet {
    /// Every parameter in the store.
    pub fn full(params: &ModelParams) -> Self {
        TrainableSet {
            names: params.names().map(str::to_string).collect(),
        }
    }

    /// Exactly the encoder biases plus all pooler and classifier parameters.
    pub fn bitfit(params: &ModelParams) -> Self {
        TrainableSet {
            names: params
                .names()
                .filter(|n| {
                    ModelParams::is_encoder_bias(n)
                        || n.starts_with("pooler/")
                        || n.starts_with("cls/")
                })
                .map(str::to_string)
                .collect(),
        }
    }

    /// Exactly one cross-query registry entry.
    pub fn qcross_only(key: QcrossKey, n_layers: usize) -> Self {
        TrainableSet {
            names: ModelParams::qcross_names(key, n_layers)
                .into_iter()
                .collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }
}

/// One decoupled-weight-decay Adam step over `grads ∩ trainable`.
///
/// Parameters absent from `grads` (not touched by the forward pass) and
/// parameters outside `trainable` keep their exact bit patterns. Decay
/// applies only to non-bias parameters, before the moment update:
/// `θ ← θ − lr·wd·θ − lr·m̂/(√v̂ + eps)`.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Vec<f64>>,
    trainable: &TrainableSet,
    state: &mut AdamState,
    lr: f64,
    hyper: &AdamHyper,
) -> Result<()> {
    state.t += 1;
    let t = state.t;
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);
    for (name, grad) in grads {
        if !trainable.contains(name) {
            continue;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric(format!(
                "step {t}: non-finite gradient for {name}"
            )));
        }
        let tensor = params.get_mut(name)?;
        if tensor.numel() != grad.len() {
            return Err(Error::contract(format!(
                "gradient length {} does not match {name} ({} elements)",
                grad.len(),
                tensor.numel()
            )));
        }
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        let decay = if ModelParams::is_bias_name(name) {
            0.0
        } else {
            hyper.weight_decay
        };
        let data = tensor.data_mut();
        for i in 0..grad.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            data[i] -= lr * decay * data[i];
            data[i] -= lr * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
