//! Workbench for studying dual-query cross-lingual attention on a synthetic
//! multilingual reasoning task.
//!
//! The crate is organized along the experiment pipeline:
//!
//! * [`tensor`] — dense f64 tensors, a reverse-mode tape, gradient checking,
//!   and the named-tensor checkpoint container.
//! * [`data`] — closed-world theory generation, verbalization into synthetic
//!   languages, example assembly, and JSONL/registry file formats.
//! * [`masks`] — language-tagged attention masks: non-interfering and
//!   interfering (M1, M2) pairs, the structured-dropout mask, and their
//!   deterministic inference-time counterparts.
//! * [`model`] — a small transformer encoder with a dual-query attention
//!   layer, classification/masked-token heads, and a swappable cross-query
//!   registry.
//! * [`train`] — AdamW with linear warmup/decay, freeze-set protocols
//!   (bias-only, cross-query-only), masked-LM pretraining and classifier
//!   fine-tuning loops.
//! * [`eval`] — zero-shot transfer matrices, cross-query swapping, and
//!   attention-pattern stability measurement.
//!
//! Everything is f64, single-threaded per run, and deterministic under a
//! fixed seed; evaluation fan-out is the only place threads appear.

pub mod data;
pub mod error;
pub mod eval;
pub mod masks;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
