//! Transformer encoder with a dual-query attention layer.
//!
//! The encoder runs one of four attention schemes: plain softmax attention,
//! a structured-dropout baseline (single query, thinned cross-lingual
//! scores), and two dual-query variants where a second query matrix handles
//! cross-lingual attention through an (M1, M2) mask pair — with that matrix
//! either shared across language pairs or selected per pair from a registry.

mod config;
mod encoder;
mod params;
mod policy;

pub use config::{AttentionScheme, ModelConfig, QcrossKey};
pub use encoder::{
    mixture_probs, single_mask_probs, Encoder, ForwardPass, ForwardTrace, LN_EPS,
};
pub use params::ModelParams;
pub use policy::{build_eval_masks, build_eval_masks_with_policy, build_train_masks};
